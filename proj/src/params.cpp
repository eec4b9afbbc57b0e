#include "dp3d/params.hpp"

#include "dp3d/error.hpp"

namespace dp3d {

void round_to_float32(Mat& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
  }
}

int ParameterSet::add(std::string name, Mat init) {
  if (index_.count(name) != 0) throw Error("duplicate parameter name: " + name);
  round_to_float32(init);
  const int id = size();
  index_.emplace(name, id);
  params_.push_back({std::move(name), std::move(init)});
  return id;
}

int ParameterSet::add_zeros(std::string name, Eigen::Index rows, Eigen::Index cols) {
  return add(std::move(name), Mat::Zero(rows, cols));
}

int ParameterSet::add_normal(std::string name, Eigen::Index rows, Eigen::Index cols,
                             double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return add(std::move(name), std::move(m));
}

int ParameterSet::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

size_t ParameterSet::scalar_count() const {
  size_t n = 0;
  for (const auto& p : params_) n += static_cast<size_t>(p.value.size());
  return n;
}

uint64_t fnv1a(const void* data, size_t bytes, uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

uint64_t hash_matrix(const Mat& m, uint64_t seed) {
  const int64_t shape[2] = {m.rows(), m.cols()};
  uint64_t h = fnv1a(shape, sizeof(shape), seed);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const float f = static_cast<float>(m.data()[i]);
    h = fnv1a(&f, sizeof(f), h);
  }
  return h;
}

uint64_t ParameterSet::hash() const {
  uint64_t h = 1469598103934665603ULL;
  for (const auto& p : params_) {
    h = fnv1a(p.name.data(), p.name.size(), h);
    h = hash_matrix(p.value, h);
  }
  return h;
}

}  // namespace dp3d
