#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "moc/common.hpp"
#include "moc/numarray.hpp"

namespace moc {

// Ordered collection of named parameter tensors. The flattened view (tensor
// values concatenated in slot order) is the canonical layout shared by the
// optimizer, checkpoints, and parameter averaging.
class ParamSet {
 public:
  ParamSet() = default;

  int add(std::string name, NumArray tensor) {
    offsets_.push_back(flat_size_);
    flat_size_ += tensor.size();
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(tensor));
    return static_cast<int>(tensors_.size()) - 1;
  }

  int size() const { return static_cast<int>(tensors_.size()); }

  NumArray& tensor(int slot) { return tensors_[static_cast<std::size_t>(slot)]; }
  const NumArray& tensor(int slot) const { return tensors_[static_cast<std::size_t>(slot)]; }
  const std::string& name(int slot) const { return names_[static_cast<std::size_t>(slot)]; }

  std::size_t flat_size() const { return flat_size_; }

  std::vector<double> flat_view() const {
    std::vector<double> flat;
    flat.reserve(flat_size_);
    for (const NumArray& t : tensors_) {
      flat.insert(flat.end(), t.values().begin(), t.values().end());
    }
    return flat;
  }

  void set_flat(std::span<const double> flat) {
    require(flat.size() == flat_size_, ErrorCategory::shape,
            "flat view size mismatch: expected " + std::to_string(flat_size_) + ", got " +
                std::to_string(flat.size()));
    std::size_t k = 0;
    for (NumArray& t : tensors_) {
      for (double& x : t.values()) x = flat[k++];
    }
  }

  double get_flat(std::size_t idx) const {
    auto [slot, inner] = locate(idx);
    return tensors_[slot][inner];
  }

  void add_flat(std::size_t idx, double delta) {
    auto [slot, inner] = locate(idx);
    tensors_[slot][inner] += delta;
  }

  bool all_finite(std::string* first_bad = nullptr) const {
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      if (!tensors_[i].all_finite()) {
        if (first_bad) *first_bad = names_[i];
        return false;
      }
    }
    return true;
  }

  // Elementwise (a + b) / 2; layouts must agree.
  static ParamSet average(const ParamSet& a, const ParamSet& b) {
    require(a.size() == b.size(), ErrorCategory::shape, "parameter sets differ in tensor count");
    ParamSet out = a;
    for (int s = 0; s < a.size(); ++s) {
      require(a.tensor(s).same_shape(b.tensor(s)), ErrorCategory::shape,
              "parameter tensor " + a.name(s) + " differs in shape");
      const double* pb = b.tensor(s).data();
      double* po = out.tensor(s).data();
      for (std::size_t i = 0; i < out.tensor(s).size(); ++i) {
        po[i] = (po[i] + pb[i]) * 0.5;
      }
    }
    return out;
  }

  // Two parameter sets laid out back to back; names gain the given prefixes.
  static ParamSet concat(const ParamSet& a, const ParamSet& b, const std::string& prefix_a,
                         const std::string& prefix_b) {
    ParamSet out;
    for (int s = 0; s < a.size(); ++s) out.add(prefix_a + a.name(s), a.tensor(s));
    for (int s = 0; s < b.size(); ++s) out.add(prefix_b + b.name(s), b.tensor(s));
    return out;
  }

  // Copy of tensors [begin, end).
  ParamSet slice(int begin, int end) const {
    ParamSet out;
    for (int s = begin; s < end; ++s) out.add(name(s), tensor(s));
    return out;
  }

  // Overwrite tensors starting at slot `begin` with the tensors of `src`.
  void set_slice(int begin, const ParamSet& src) {
    for (int s = 0; s < src.size(); ++s) {
      NumArray& dst = tensor(begin + s);
      require(dst.same_shape(src.tensor(s)), ErrorCategory::shape,
              "set_slice shape mismatch at " + name(begin + s));
      dst.values() = src.tensor(s).values();
    }
  }

 private:
  std::pair<std::size_t, std::size_t> locate(std::size_t idx) const {
    require(idx < flat_size_, ErrorCategory::argument, "flat index out of range");
    auto it = std::upper_bound(offsets_.begin(), offsets_.end(), idx);
    std::size_t slot = static_cast<std::size_t>(it - offsets_.begin()) - 1;
    return {slot, idx - offsets_[slot]};
  }

  std::vector<NumArray> tensors_;
  std::vector<std::string> names_;
  std::vector<std::size_t> offsets_;
  std::size_t flat_size_ = 0;
};

// Per-parameter gradient accumulator aligned 1:1 with a ParamSet layout.
// Zeroed on creation; accumulation is additive.
class GradStore {
 public:
  GradStore() = default;

  explicit GradStore(const ParamSet& ref) {
    grads_.reserve(static_cast<std::size_t>(ref.size()));
    names_.reserve(static_cast<std::size_t>(ref.size()));
    for (int s = 0; s < ref.size(); ++s) {
      NumArray g(ref.tensor(s).shape());
      offsets_.push_back(flat_size_);
      flat_size_ += g.size();
      grads_.push_back(std::move(g));
      names_.push_back(ref.name(s));
    }
  }

  int size() const { return static_cast<int>(grads_.size()); }
  NumArray& grad(int slot) { return grads_[static_cast<std::size_t>(slot)]; }
  const NumArray& grad(int slot) const { return grads_[static_cast<std::size_t>(slot)]; }
  const std::string& name(int slot) const { return names_[static_cast<std::size_t>(slot)]; }

  void zero() {
    for (NumArray& g : grads_) g.fill(0.0);
  }

  void add(const GradStore& other) {
    require(size() == other.size(), ErrorCategory::shape, "gradient stores differ in layout");
    for (int s = 0; s < size(); ++s) {
      double* pd = grads_[static_cast<std::size_t>(s)].data();
      const double* po = other.grad(s).data();
      for (std::size_t i = 0; i < other.grad(s).size(); ++i) pd[i] += po[i];
    }
  }

  void scale(double factor) {
    for (NumArray& g : grads_) {
      for (double& x : g.values()) x *= factor;
    }
  }

  std::size_t flat_size() const { return flat_size_; }

  double get_flat(std::size_t idx) const {
    require(idx < flat_size_, ErrorCategory::argument, "flat index out of range");
    auto it = std::upper_bound(offsets_.begin(), offsets_.end(), idx);
    std::size_t slot = static_cast<std::size_t>(it - offsets_.begin()) - 1;
    return grads_[slot][idx - offsets_[slot]];
  }

  std::vector<double> flat_view() const {
    std::vector<double> flat;
    flat.reserve(flat_size_);
    for (const NumArray& g : grads_) {
      flat.insert(flat.end(), g.values().begin(), g.values().end());
    }
    return flat;
  }

 private:
  std::vector<NumArray> grads_;
  std::vector<std::string> names_;
  std::vector<std::size_t> offsets_;
  std::size_t flat_size_ = 0;
};

}  // namespace moc
