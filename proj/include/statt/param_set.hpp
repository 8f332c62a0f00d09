#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "statt/tensor.hpp"

namespace statt {

/// Ordered collection of named tensors. Order is insertion order and is part
/// of the checkpoint format.
template <typename T>
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
  };

  void add(std::string name, Tensor<T> value) {
    if (find(name)) throw ContractError("duplicate parameter name '" + name + "'");
    entries_.push_back({std::move(name), std::move(value)});
  }

  const Tensor<T>* find(const std::string& name) const {
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
    return it == entries_.end() ? nullptr : &it->value;
  }
  Tensor<T>* find(const std::string& name) {
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
    return it == entries_.end() ? nullptr : &it->value;
  }
  const Tensor<T>& at(const std::string& name) const {
    if (const Tensor<T>* t = find(name)) return *t;
    throw ContractError("unknown parameter '" + name + "'");
  }
  Tensor<T>& at(const std::string& name) {
    if (Tensor<T>* t = find(name)) return *t;
    throw ContractError("unknown parameter '" + name + "'");
  }

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t element_count() const {
    std::size_t n = 0;
    for (const Entry& e : entries_) n += e.value.size();
    return n;
  }

  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }
  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }

  /// Same names and shapes, all zeros.
  ParamSet zeros_like() const {
    ParamSet out;
    for (const Entry& e : entries_) out.entries_.push_back({e.name, Tensor<T>(e.value.shape())});
    return out;
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const Entry& e : entries_) out.add(e.name, e.value.template cast<U>());
    return out;
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      if (a.entries_[i].name != b.entries_[i].name || !(a.entries_[i].value == b.entries_[i].value)) return false;
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
};

}  // namespace statt
