#pragma once

// Dense tensors over named, labeled axes. Every message, marginal and
// conditional probability table in the engine is a DiscreteTensor.

#include <cstddef>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace efe {

struct Axis {
  std::string name;
  std::size_t card = 0;

  friend bool operator==(const Axis&, const Axis&) = default;
};

using AxisSet = std::set<std::string>;

inline constexpr double kNormalizationTolerance = 1e-12;

// Immutable value type. Data is stored row-major over axes() (last axis
// fastest) and shared between copies.
class DiscreteTensor {
 public:
  DiscreteTensor();
  // Entries must be finite and non-negative.
  DiscreteTensor(std::vector<Axis> axes, std::vector<double> data);

  // Finite entries of either sign; used for score tables fed to softmax.
  static DiscreteTensor signed_values(std::vector<Axis> axes,
                                     std::vector<double> data);
  static DiscreteTensor filled(std::vector<Axis> axes, double value);
  static DiscreteTensor uniform(std::vector<Axis> axes);
  static DiscreteTensor one_hot(Axis axis, std::size_t index);
  static DiscreteTensor scalar(double value);

  const std::vector<Axis>& axes() const { return axes_; }
  std::span<const double> data() const { return *data_; }
  std::size_t size() const { return data_->size(); }
  std::size_t rank() const { return axes_.size(); }

  bool has_axis(const std::string& name) const;
  std::size_t axis_index(const std::string& name) const;
  std::size_t cardinality(const std::string& name) const;
  AxisSet axis_names() const;
  std::vector<std::size_t> strides() const;

  double operator[](std::size_t flat) const { return (*data_)[flat]; }
  double at(std::span<const std::size_t> index) const;
  double sum() const;
  bool is_normalized(double tol = 1e-10) const;

  DiscreteTensor renamed(const std::string& from, const std::string& to) const;
  // Same entries with axes permuted into the given order.
  DiscreteTensor permuted(const std::vector<std::string>& order) const;
  // Axes sorted by name.
  DiscreteTensor canonical() const;
  // Scales all entries by a non-negative factor.
  DiscreteTensor scaled(double factor) const;

  // Shared data identity; lets callers reuse derived structures.
  const void* data_identity() const { return data_.get(); }

 private:
  struct Unchecked {};
  DiscreteTensor(Unchecked, std::vector<Axis> axes,
                 std::shared_ptr<const std::vector<double>> data);

  std::vector<Axis> axes_;
  std::shared_ptr<const std::vector<double>> data_;
};

// True when both tensors carry the same axis set and all entries agree
// within tol after aligning axis order.
bool approx_equal(const DiscreteTensor& a, const DiscreteTensor& b,
                  double tol = 1e-10);
double max_abs_difference(const DiscreteTensor& a, const DiscreteTensor& b);

// Pointwise product of all factors summed over every axis not in keep_axes.
// Output axes are sorted by name. Axes are eliminated one at a time in a
// greedy smallest-intermediate order.
DiscreteTensor contract(std::span<const DiscreteTensor> factors,
                        const AxisSet& keep_axes);
DiscreteTensor contract(std::initializer_list<DiscreteTensor> factors,
                        const AxisSet& keep_axes);
DiscreteTensor marginal(const DiscreteTensor& t, const AxisSet& keep_axes);
DiscreteTensor multiply(const DiscreteTensor& a, const DiscreteTensor& b);

DiscreteTensor normalize(const DiscreteTensor& t, const AxisSet& over);
DiscreteTensor normalize(const DiscreteTensor& t);

// Shannon entropy in nats of a tensor normalized over all of its axes.
double entropy(const DiscreteTensor& t);
// H[q(rest | given = c)] for every assignment c of the given axes.
DiscreteTensor conditional_entropy(const DiscreteTensor& joint,
                                   const AxisSet& given);
DiscreteTensor softmax(const DiscreteTensor& scores);
double log_sum_exp(const DiscreteTensor& scores);
double kl_divergence(const DiscreteTensor& p, const DiscreteTensor& q);

nlohmann::json to_json(const DiscreteTensor& t);
DiscreteTensor tensor_from_json(const nlohmann::json& j);

}  // namespace efe
