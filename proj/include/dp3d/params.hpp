#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace dp3d {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

/// Rounds every entry to the nearest float32. Parameters live on the float32
/// grid so that checkpoints (float32 payloads) reload bitwise.
void round_to_float32(Mat& m);

struct Parameter {
  std::string name;
  Mat value;
};

/// Ordered, named collection of trainable tensors.
class ParameterSet {
 public:
  /// Registers a tensor; names must be unique. Returns its index.
  int add(std::string name, Mat init);
  int add_zeros(std::string name, Eigen::Index rows, Eigen::Index cols);
  /// Gaussian init with the given standard deviation.
  int add_normal(std::string name, Eigen::Index rows, Eigen::Index cols, double stddev,
                 std::mt19937_64& rng);

  Parameter& operator[](int i) { return params_[static_cast<size_t>(i)]; }
  const Parameter& operator[](int i) const { return params_[static_cast<size_t>(i)]; }
  int size() const { return static_cast<int>(params_.size()); }
  /// Index of a named tensor or -1.
  int find(const std::string& name) const;
  size_t scalar_count() const;

  /// FNV-1a over names, shapes and float32 payload bytes.
  uint64_t hash() const;

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, int> index_;
};

/// FNV-1a 64-bit helpers shared by hashing code.
uint64_t fnv1a(const void* data, size_t bytes, uint64_t seed = 1469598103934665603ULL);
uint64_t hash_matrix(const Mat& m, uint64_t seed = 1469598103934665603ULL);

}  // namespace dp3d
