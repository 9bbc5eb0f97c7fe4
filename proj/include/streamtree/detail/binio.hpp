#ifndef STREAMTREE_DETAIL_BINIO_HPP
#define STREAMTREE_DETAIL_BINIO_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace streamtree::detail {

template <class T>
void put(std::ostream& out, const T& v) {
  static_assert(std::is_trivially_copyable_v<T>);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  static_assert(std::is_trivially_copyable_v<T>);
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint truncated");
  return v;
}

template <class T>
void put_vec(std::ostream& out, const std::vector<T>& v) {
  static_assert(std::is_trivially_copyable_v<T>);
  put<std::uint64_t>(out, v.size());
  if (!v.empty())
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <class T>
std::vector<T> get_vec(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  std::vector<T> v(n);
  if (n) {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(n * sizeof(T)));
    if (!in) throw std::runtime_error("checkpoint truncated");
  }
  return v;
}

inline void put_str(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_str(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("checkpoint truncated");
  return s;
}

inline void put_eigen(std::ostream& out, const Eigen::VectorXd& v) {
  put<std::int64_t>(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline Eigen::VectorXd get_eigen_vec(std::istream& in) {
  const auto n = get<std::int64_t>(in);
  Eigen::VectorXd v(n);
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw std::runtime_error("checkpoint truncated");
  return v;
}

inline void put_eigen(std::ostream& out, const Eigen::MatrixXd& m) {
  put<std::int64_t>(out, m.rows());
  put<std::int64_t>(out, m.cols());
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
}

inline Eigen::MatrixXd get_eigen_mat(std::istream& in) {
  const auto r = get<std::int64_t>(in);
  const auto c = get<std::int64_t>(in);
  Eigen::MatrixXd m(r, c);
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in) throw std::runtime_error("checkpoint truncated");
  return m;
}

}  // namespace streamtree::detail

#endif  // STREAMTREE_DETAIL_BINIO_HPP
