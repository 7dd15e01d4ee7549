#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "hydro/types.hpp"

namespace hydro {

/// Binary indexed tree over non-negative leaf priorities. Internal nodes are
/// recomputed from their children on every update, so the root always equals
/// the tree-ordered sum of the current leaves.
class SumTree {
 public:
  explicit SumTree(size_t capacity);

  size_t capacity() const { return cap_; }
  double total() const { return node_[1]; }
  double get(size_t i) const { return node_[base_ + i]; }
  void set(size_t i, double p);

  /// Leaf whose cumulative-priority interval contains u, for u in [0, total).
  size_t find_prefix(double u) const;

 private:
  size_t cap_ = 0;
  size_t base_ = 0;
  std::vector<double> node_;
};

struct BufferEntry {
  Transition t;
  double u = 0.0;    // ensemble disagreement at insertion time
  double psi = 0.0;  // current priority, in (0, 1]
  uint64_t id = 0;   // monotone insertion id; detects stale references
};

/// Reference to a sampled slot; stale after the slot is overwritten.
struct EntryRef {
  size_t slot = 0;
  uint64_t id = 0;
};

/// Fixed-capacity FIFO transition store with proportional priority sampling.
class PriorityBuffer {
 public:
  explicit PriorityBuffer(size_t capacity);

  size_t capacity() const { return capacity_; }
  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  double total_priority() const { return tree_.total(); }

  const BufferEntry& entry(size_t slot) const { return entries_[slot]; }
  bool valid(const EntryRef& ref) const {
    return ref.slot < entries_.size() && entries_[ref.slot].id == ref.id;
  }

  /// Inserts unconditionally (the uncertainty filter lives in the caller);
  /// evicts the oldest entry once full. psi must be positive.
  EntryRef insert(const Transition& t, double u, double psi);
  void set_priority(size_t slot, double psi);

  /// n draws with replacement, probability psi_i / sum_k psi_k each.
  std::vector<EntryRef> sample_prioritized(size_t n, std::mt19937_64& rng) const;
  std::vector<EntryRef> sample_uniform(size_t n, std::mt19937_64& rng) const;

 private:
  size_t capacity_;
  size_t write_ = 0;  // next FIFO slot
  uint64_t next_id_ = 1;
  std::vector<BufferEntry> entries_;
  SumTree tree_;
};

}  // namespace hydro
