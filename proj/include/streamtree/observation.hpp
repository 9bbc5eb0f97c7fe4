#ifndef STREAMTREE_OBSERVATION_HPP
#define STREAMTREE_OBSERVATION_HPP

#include <Eigen/Dense>
#include <cstdint>

namespace streamtree {

enum class Task { kRegression, kClassification };

/// One labelled datapoint from a stream. For regression `y` holds the
/// response; for classification `label` holds the class in [0, K).
struct Observation {
  Eigen::VectorXd x;
  double y = 0.0;
  int label = -1;
  std::int64_t t = 0;  // arrival index
};

}  // namespace streamtree

#endif  // STREAMTREE_OBSERVATION_HPP
