#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "difnav/core/error.hpp"

namespace difnav::gradcore {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

/// Dense row-major array with an optional gradient buffer of identical shape.
template <class T>
struct Tensor {
  Shape shape;
  std::vector<T> data;
  std::optional<std::vector<T>> grad;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(numel(shape), fill) {}
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel(shape)) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    }
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  bool operator==(const Tensor& o) const { return shape == o.shape && data == o.data; }
};

/// Named learnable parameters in registration order.
template <class T>
class ParamStore {
 public:
  Tensor<T>& add(const std::string& name, Tensor<T> value) {
    if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
    index_[name] = entries_.size();
    entries_.emplace_back(name, std::move(value));
    return entries_.back().second;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter: " + name);
    return entries_[it->second].second;
  }
  const Tensor<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter: " + name);
    return entries_[it->second].second;
  }

  std::size_t size() const { return entries_.size(); }
  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& [_, t] : entries_) n += t.size();
    return n;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  bool operator==(const ParamStore& o) const { return entries_ == o.entries_; }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Gradient per parameter name, in name order.
template <class T>
using GradMap = std::map<std::string, std::vector<T>>;

}  // namespace difnav::gradcore
