#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ctp/grad/tape.hpp"

namespace ctp {

/// Named trainable arrays in insertion order.
template <typename Scalar>
class ParameterStore {
 public:
  void add(const std::string& name, Array<Scalar> array) {
    if (index_.count(name)) throw ContractError("parameter '" + name + "' registered twice");
    array.check();
    array.requires_grad = true;
    index_.emplace(name, entries_.size());
    entries_.emplace_back(name, std::move(array));
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  const Array<Scalar>& get(const std::string& name) const { return entries_[lookup(name)].second; }
  Array<Scalar>& get(const std::string& name) { return entries_[lookup(name)].second; }

  const std::vector<std::pair<std::string, Array<Scalar>>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Array<Scalar>>>& entries() { return entries_; }

  std::size_t size() const { return entries_.size(); }

  /// Total trainable scalar count.
  Index scalar_count() const {
    Index n = 0;
    for (const auto& [name, a] : entries_) n += a.size();
    return n;
  }

  bool operator==(const ParameterStore& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& [na, a] = entries_[i];
      const auto& [nb, b] = other.entries_[i];
      if (na != nb || a.shape != b.shape || a.values != b.values) return false;
    }
    return true;
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
  }

  std::vector<std::pair<std::string, Array<Scalar>>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename Scalar>
using GradientMap = std::map<std::string, Matrix<Scalar>>;

/// Parameters of a store recorded as leaves on one tape.
template <typename Scalar>
class Binding {
 public:
  Binding() = default;

  Binding(Tape<Scalar>& tape, const ParameterStore<Scalar>& store, bool requires_grad = true) {
    for (const auto& [name, array] : store.entries()) {
      vars_.emplace(name, tape.leaf(array.shape, array.values, requires_grad));
      order_.push_back(name);
    }
  }

  const Var<Scalar>& operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw ContractError("parameter '" + name + "' is not bound");
    return it->second;
  }

  const std::vector<std::string>& names() const { return order_; }

 private:
  std::unordered_map<std::string, Var<Scalar>> vars_;
  std::vector<std::string> order_;
};

/// Runs the reverse sweep from `loss` and collects one gradient per bound
/// parameter. Parameters the loss does not reach get an exact zero block.
template <typename Scalar>
GradientMap<Scalar> backward(const Var<Scalar>& loss, const Binding<Scalar>& params) {
  loss.tape().backward(loss);
  GradientMap<Scalar> grads;
  for (const auto& name : params.names()) grads.emplace(name, loss.tape().grad(params[name]));
  return grads;
}

template <typename Scalar>
void accumulate_into(GradientMap<Scalar>& total, const GradientMap<Scalar>& part) {
  for (const auto& [name, g] : part) {
    auto it = total.find(name);
    if (it == total.end()) {
      total.emplace(name, g);
    } else {
      it->second += g;
    }
  }
}

}  // namespace ctp
