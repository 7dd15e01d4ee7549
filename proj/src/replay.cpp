#include "hydro/replay.hpp"

#include <cmath>
#include <stdexcept>

#include "hydro/rng.hpp"

namespace hydro {

SumTree::SumTree(size_t capacity) {
  if (capacity == 0) throw std::invalid_argument("SumTree: zero capacity");
  cap_ = capacity;
  base_ = 1;
  while (base_ < cap_) base_ *= 2;
  node_.assign(2 * base_, 0.0);
}

void SumTree::set(size_t i, double p) {
  if (i >= cap_) throw std::invalid_argument("SumTree: index out of range");
  if (!(p >= 0.0) || !std::isfinite(p))
    throw std::invalid_argument("SumTree: priority must be finite and non-negative");
  size_t n = base_ + i;
  node_[n] = p;
  for (n /= 2; n >= 1; n /= 2) node_[n] = node_[2 * n] + node_[2 * n + 1];
}

size_t SumTree::find_prefix(double u) const {
  size_t n = 1;
  while (n < base_) {
    double left = node_[2 * n];
    if (u < left) {
      n = 2 * n;
    } else {
      u -= left;
      n = 2 * n + 1;
    }
  }
  size_t i = n - base_;
  // Rounding at the right edge can land on a zero-priority leaf; back up to
  // the nearest positive one.
  while (i > 0 && node_[base_ + i] == 0.0) --i;
  return i;
}

PriorityBuffer::PriorityBuffer(size_t capacity) : capacity_(capacity), tree_(capacity) {
  if (capacity == 0) throw std::invalid_argument("PriorityBuffer: zero capacity");
  entries_.reserve(capacity);
}

EntryRef PriorityBuffer::insert(const Transition& t, double u, double psi) {
  if (!(psi > 0.0) || !std::isfinite(psi))
    throw std::invalid_argument("PriorityBuffer: priority must be positive");
  size_t slot;
  if (entries_.size() < capacity_) {
    slot = entries_.size();
    entries_.push_back(BufferEntry{t, u, psi, next_id_});
  } else {
    slot = write_;
    entries_[slot] = BufferEntry{t, u, psi, next_id_};
  }
  write_ = (slot + 1) % capacity_;
  tree_.set(slot, psi);
  return EntryRef{slot, next_id_++};
}

void PriorityBuffer::set_priority(size_t slot, double psi) {
  if (slot >= entries_.size()) throw std::invalid_argument("PriorityBuffer: bad slot");
  if (!(psi > 0.0) || !std::isfinite(psi))
    throw std::invalid_argument("PriorityBuffer: priority must be positive");
  entries_[slot].psi = psi;
  tree_.set(slot, psi);
}

std::vector<EntryRef> PriorityBuffer::sample_prioritized(size_t n,
                                                         std::mt19937_64& rng) const {
  if (empty()) throw std::invalid_argument("PriorityBuffer: sampling from empty buffer");
  std::vector<EntryRef> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    double u = uniform01(rng) * tree_.total();
    size_t slot = tree_.find_prefix(u);
    out.push_back(EntryRef{slot, entries_[slot].id});
  }
  return out;
}

std::vector<EntryRef> PriorityBuffer::sample_uniform(size_t n, std::mt19937_64& rng) const {
  if (empty()) throw std::invalid_argument("PriorityBuffer: sampling from empty buffer");
  std::vector<EntryRef> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    size_t slot = uniform_index(rng, entries_.size());
    out.push_back(EntryRef{slot, entries_[slot].id});
  }
  return out;
}

}  // namespace hydro
