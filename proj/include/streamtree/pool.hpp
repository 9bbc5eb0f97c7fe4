#ifndef STREAMTREE_POOL_HPP
#define STREAMTREE_POOL_HPP

#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "streamtree/observation.hpp"

namespace streamtree {

/// Shared active-data store. Slots are reused after erasure so that ids
/// stay small and stable; all particles reference observations by slot id.
class DataPool {
 public:
  int insert(Observation obs) {
    int id;
    if (!free_.empty()) {
      id = free_.back();
      free_.pop_back();
      slots_[id] = Slot{std::move(obs), true};
    } else {
      id = static_cast<int>(slots_.size());
      slots_.push_back(Slot{std::move(obs), true});
    }
    pos_.resize(slots_.size(), -1);
    pos_[id] = static_cast<int>(live_.size());
    live_.push_back(id);
    return id;
  }

  void erase(int id) {
    check(id);
    slots_[id].live = false;
    free_.push_back(id);
    const int p = pos_[id];
    const int last = live_.back();
    live_[p] = last;
    pos_[last] = p;
    live_.pop_back();
    pos_[id] = -1;
  }

  const Observation& at(int id) const {
    check(id);
    return slots_[id].obs;
  }

  bool live(int id) const {
    return id >= 0 && id < static_cast<int>(slots_.size()) && slots_[id].live;
  }

  std::size_t size() const { return live_.size(); }
  std::size_t capacity_slots() const { return slots_.size(); }
  const std::vector<int>& live_ids() const { return live_; }

  int oldest() const {
    int best = -1;
    for (int id : live_)
      if (best < 0 || slots_[id].obs.t < slots_[best].obs.t) best = id;
    return best;
  }

  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  struct Slot {
    Observation obs;
    bool live = false;
  };

  void check(int id) const {
    if (!live(id)) throw std::out_of_range("pool id not live");
  }

  std::vector<Slot> slots_;
  std::vector<int> free_;
  std::vector<int> live_;  // live ids, order unspecified but deterministic
  std::vector<int> pos_;   // id -> index into live_
};

}  // namespace streamtree

#endif  // STREAMTREE_POOL_HPP
