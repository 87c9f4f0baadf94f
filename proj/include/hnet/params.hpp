#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hnet {

/// Named learnable vectors with parallel gradient and Adam moment buffers.
/// Slots keep their insertion order, which is also the serialization order.
template <class T>
class ParameterStore {
 public:
  struct Slot {
    std::string name;
    std::vector<T> value;
    std::vector<T> grad;
    std::vector<T> moment1;
    std::vector<T> moment2;
  };

  std::size_t add(const std::string& name, std::vector<T> init) {
    if (index_.contains(name)) throw std::invalid_argument("duplicate parameter slot '" + name + "'");
    Slot s;
    s.name = name;
    s.grad.assign(init.size(), T(0));
    s.moment1.assign(init.size(), T(0));
    s.moment2.assign(init.size(), T(0));
    s.value = std::move(init);
    slots_.push_back(std::move(s));
    index_[name] = slots_.size() - 1;
    return slots_.size() - 1;
  }

  bool contains(const std::string& name) const { return index_.contains(name); }
  std::size_t index(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter slot '" + name + "'");
    return it->second;
  }

  Slot& slot(std::size_t i) { return slots_.at(i); }
  const Slot& slot(std::size_t i) const { return slots_.at(i); }
  Slot& slot(const std::string& name) { return slots_[index(name)]; }
  const Slot& slot(const std::string& name) const { return slots_[index(name)]; }

  std::span<T> value(const std::string& name) { return slot(name).value; }
  std::span<const T> value(const std::string& name) const { return slot(name).value; }

  std::size_t size() const { return slots_.size(); }
  std::vector<Slot>& slots() { return slots_; }
  const std::vector<Slot>& slots() const { return slots_; }

  std::int64_t scalar_count() const {
    std::int64_t n = 0;
    for (const auto& s : slots_) n += static_cast<std::int64_t>(s.value.size());
    return n;
  }

  void zero_grad() {
    for (auto& s : slots_) std::fill(s.grad.begin(), s.grad.end(), T(0));
  }

 private:
  std::vector<Slot> slots_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace hnet
