#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fairmoo/tensor.hpp"

namespace fairmoo {

struct ParamSegment {
  std::string name;
  std::size_t offset;
  std::vector<std::size_t> shape;

  std::size_t size() const { return Tensor::count(shape); }
};

// Named, shaped views into one flat parameter vector. Segments tile the
// flat storage exactly, in declaration order, with no gaps.
class ParamLayout {
 public:
  ParamLayout() = default;

  explicit ParamLayout(const std::vector<std::pair<std::string, std::vector<std::size_t>>>& specs) {
    std::size_t off = 0;
    segments_.reserve(specs.size());
    for (const auto& [name, shape] : specs) {
      segments_.push_back(ParamSegment{name, off, shape});
      off += Tensor::count(shape);
    }
    total_ = off;
  }

  const std::vector<ParamSegment>& segments() const { return segments_; }
  std::size_t total_size() const { return total_; }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < segments_.size(); ++i)
      if (segments_[i].name == name) return i;
    throw std::invalid_argument("ParamLayout: no segment named '" + name + "'");
  }

  bool has(const std::string& name) const {
    for (const auto& s : segments_)
      if (s.name == name) return true;
    return false;
  }

 private:
  std::vector<ParamSegment> segments_;
  std::size_t total_ = 0;
};

struct ParamVector {
  std::shared_ptr<const ParamLayout> layout;
  std::vector<double> data;

  ParamVector() = default;
  ParamVector(std::shared_ptr<const ParamLayout> l, std::vector<double> d)
      : layout(std::move(l)), data(std::move(d)) {
    if (!layout) throw std::invalid_argument("ParamVector: null layout");
    if (data.size() != layout->total_size())
      throw std::invalid_argument("ParamVector: data length does not tile the layout");
  }

  static ParamVector zeros(std::shared_ptr<const ParamLayout> l) {
    std::size_t n = l->total_size();
    return ParamVector(std::move(l), std::vector<double>(n, 0.0));
  }

  std::size_t size() const { return data.size(); }

  Tensor segment(std::size_t i) const {
    const ParamSegment& s = layout->segments().at(i);
    return Tensor(s.shape, std::vector<double>(data.begin() + static_cast<std::ptrdiff_t>(s.offset),
                                               data.begin() + static_cast<std::ptrdiff_t>(s.offset + s.size())));
  }

  Tensor segment(const std::string& name) const { return segment(layout->index_of(name)); }

  void set_segment(std::size_t i, const Tensor& t) {
    const ParamSegment& s = layout->segments().at(i);
    if (t.shape != s.shape)
      throw std::invalid_argument("ParamVector: shape mismatch writing segment '" + s.name + "'");
    std::copy(t.data.begin(), t.data.end(), data.begin() + static_cast<std::ptrdiff_t>(s.offset));
  }

  void set_segment(const std::string& name, const Tensor& t) { set_segment(layout->index_of(name), t); }

  std::vector<Tensor> unflatten() const {
    std::vector<Tensor> out;
    out.reserve(layout->segments().size());
    for (std::size_t i = 0; i < layout->segments().size(); ++i) out.push_back(segment(i));
    return out;
  }

  static ParamVector flatten(std::shared_ptr<const ParamLayout> l, const std::vector<Tensor>& parts) {
    if (parts.size() != l->segments().size())
      throw std::invalid_argument("ParamVector::flatten: segment count mismatch");
    ParamVector v = zeros(std::move(l));
    for (std::size_t i = 0; i < parts.size(); ++i) v.set_segment(i, parts[i]);
    return v;
  }
};

}  // namespace fairmoo
