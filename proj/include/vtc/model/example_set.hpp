#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "vtc/errors.hpp"
#include "vtc/model/example.hpp"

namespace vtc {

/// Examples addressable by id, kept in insertion order.
class ExampleSet {
 public:
  ExampleSet() = default;
  explicit ExampleSet(std::vector<MultimodalExample> examples) {
    for (auto& e : examples) add(std::move(e));
  }

  void add(MultimodalExample ex) {
    if (ex.id.empty()) throw ContractError("example without an id");
    if (!index_.emplace(ex.id, items_.size()).second) throw ContractError("duplicate example id '" + ex.id + "'");
    items_.push_back(std::move(ex));
  }

  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  bool contains(const std::string& id) const { return index_.count(id) > 0; }

  const MultimodalExample& at(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw ContractError("unknown example id '" + id + "'");
    return items_[it->second];
  }
  const MultimodalExample& operator[](std::size_t i) const { return items_[i]; }

  const std::vector<MultimodalExample>& items() const { return items_; }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  std::vector<const MultimodalExample*> pointers() const {
    std::vector<const MultimodalExample*> out;
    out.reserve(items_.size());
    for (const auto& e : items_) out.push_back(&e);
    return out;
  }

 private:
  std::vector<MultimodalExample> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace vtc
