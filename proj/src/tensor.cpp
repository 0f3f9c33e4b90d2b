#include "efe/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "efe/error.hpp"

namespace efe {
namespace {

std::size_t product_of_cards(const std::vector<Axis>& axes) {
  std::size_t n = 1;
  for (const auto& a : axes) n *= a.card;
  return n;
}

void check_axes(const std::vector<Axis>& axes) {
  std::set<std::string> seen;
  for (const auto& a : axes) {
    if (a.card == 0) {
      throw StructuralError("axis '" + a.name + "' has zero cardinality");
    }
    if (!seen.insert(a.name).second) {
      throw StructuralError("duplicate axis '" + a.name + "'");
    }
  }
}

std::string describe(const std::vector<Axis>& axes) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (i) os << ", ";
    os << axes[i].name << ":" << axes[i].card;
  }
  os << ")";
  return os.str();
}

// Maps every flat index of t onto the row-major index over `subset`, taken in
// the order given.
std::vector<std::size_t> group_index(const DiscreteTensor& t,
                                     const std::vector<std::string>& subset,
                                     std::size_t* group_count) {
  const auto& axes = t.axes();
  std::vector<std::size_t> sub_stride(axes.size(), 0);
  std::size_t stride = 1;
  for (auto it = subset.rbegin(); it != subset.rend(); ++it) {
    std::size_t i = t.axis_index(*it);
    sub_stride[i] = stride;
    stride *= axes[i].card;
  }
  *group_count = stride;
  std::vector<std::size_t> out(t.size());
  std::vector<std::size_t> idx(axes.size(), 0);
  std::size_t g = 0;
  for (std::size_t f = 0; f < t.size(); ++f) {
    out[f] = g;
    for (std::size_t a = axes.size(); a-- > 0;) {
      if (++idx[a] < axes[a].card) {
        g += sub_stride[a];
        break;
      }
      g -= sub_stride[a] * (axes[a].card - 1);
      idx[a] = 0;
    }
  }
  return out;
}

std::vector<std::string> sorted_names(const AxisSet& s) {
  return {s.begin(), s.end()};
}

// Pointwise product of the factors, summed onto out_axes (in that order).
DiscreteTensor product_reduce(const std::vector<const DiscreteTensor*>& fs,
                              const std::vector<Axis>& out_axes) {
  std::vector<Axis> all = out_axes;
  for (const auto* f : fs) {
    for (const auto& a : f->axes()) {
      auto it = std::find_if(all.begin(), all.end(),
                             [&](const Axis& b) { return b.name == a.name; });
      if (it == all.end()) all.push_back(a);
    }
  }
  const std::size_t n = all.size();
  const std::size_t nf = fs.size();
  std::vector<std::vector<std::size_t>> fstride(nf,
                                                std::vector<std::size_t>(n, 0));
  for (std::size_t k = 0; k < nf; ++k) {
    auto st = fs[k]->strides();
    for (std::size_t i = 0; i < fs[k]->rank(); ++i) {
      const auto& name = fs[k]->axes()[i].name;
      for (std::size_t a = 0; a < n; ++a) {
        if (all[a].name == name) fstride[k][a] = st[i];
      }
    }
  }
  std::vector<std::size_t> ostride(n, 0);
  {
    std::size_t s = 1;
    for (std::size_t a = out_axes.size(); a-- > 0;) {
      ostride[a] = s;
      s *= out_axes[a].card;
    }
  }
  std::vector<double> out(product_of_cards(out_axes), 0.0);
  const std::size_t total = product_of_cards(all);
  std::vector<std::size_t> idx(n, 0), foff(nf, 0);
  std::vector<std::span<const double>> fdata;
  fdata.reserve(nf);
  for (const auto* f : fs) fdata.push_back(f->data());
  std::size_t ooff = 0;
  for (std::size_t it = 0; it < total; ++it) {
    double v = 1.0;
    for (std::size_t k = 0; k < nf && v != 0.0; ++k) v *= fdata[k][foff[k]];
    out[ooff] += v;
    for (std::size_t a = n; a-- > 0;) {
      if (++idx[a] < all[a].card) {
        for (std::size_t k = 0; k < nf; ++k) foff[k] += fstride[k][a];
        ooff += ostride[a];
        break;
      }
      const std::size_t back = all[a].card - 1;
      for (std::size_t k = 0; k < nf; ++k) foff[k] -= fstride[k][a] * back;
      ooff -= ostride[a] * back;
      idx[a] = 0;
    }
  }
  return DiscreteTensor::signed_values(out_axes, std::move(out));
}

void require_normalized(const DiscreteTensor& t, const char* op) {
  if (std::abs(t.sum() - 1.0) > 1e-9) {
    std::ostringstream os;
    os << op << ": input is not normalized (sum " << t.sum() << ")";
    throw ContractViolation(os.str());
  }
}

}  // namespace

DiscreteTensor::DiscreteTensor()
    : data_(std::make_shared<const std::vector<double>>(1, 0.0)) {}

DiscreteTensor::DiscreteTensor(std::vector<Axis> axes, std::vector<double> data)
    : axes_(std::move(axes)) {
  check_axes(axes_);
  if (data.size() != product_of_cards(axes_)) {
    throw StructuralError("tensor " + describe(axes_) + " expects " +
                          std::to_string(product_of_cards(axes_)) +
                          " entries, got " + std::to_string(data.size()));
  }
  for (double v : data) {
    if (!std::isfinite(v) || v < 0.0) {
      throw StructuralError("tensor entries must be finite and non-negative");
    }
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

DiscreteTensor::DiscreteTensor(Unchecked, std::vector<Axis> axes,
                               std::shared_ptr<const std::vector<double>> data)
    : axes_(std::move(axes)), data_(std::move(data)) {}

DiscreteTensor DiscreteTensor::signed_values(std::vector<Axis> axes,
                                             std::vector<double> data) {
  check_axes(axes);
  if (data.size() != product_of_cards(axes)) {
    throw StructuralError("tensor " + describe(axes) + " size mismatch");
  }
  for (double v : data) {
    if (std::isnan(v) || std::isinf(v)) {
      throw StructuralError("tensor entries must be finite");
    }
  }
  return DiscreteTensor(Unchecked{}, std::move(axes),
                        std::make_shared<const std::vector<double>>(
                            std::move(data)));
}

DiscreteTensor DiscreteTensor::filled(std::vector<Axis> axes, double value) {
  const std::size_t n = product_of_cards(axes);
  return DiscreteTensor(std::move(axes), std::vector<double>(n, value));
}

DiscreteTensor DiscreteTensor::uniform(std::vector<Axis> axes) {
  const std::size_t n = product_of_cards(axes);
  return filled(std::move(axes), 1.0 / static_cast<double>(n));
}

DiscreteTensor DiscreteTensor::one_hot(Axis axis, std::size_t index) {
  if (index >= axis.card) {
    throw StructuralError("one-hot index out of range for '" + axis.name + "'");
  }
  std::vector<double> d(axis.card, 0.0);
  d[index] = 1.0;
  return DiscreteTensor({std::move(axis)}, std::move(d));
}

DiscreteTensor DiscreteTensor::scalar(double value) {
  return DiscreteTensor({}, {value});
}

bool DiscreteTensor::has_axis(const std::string& name) const {
  return std::any_of(axes_.begin(), axes_.end(),
                     [&](const Axis& a) { return a.name == name; });
}

std::size_t DiscreteTensor::axis_index(const std::string& name) const {
  for (std::size_t i = 0; i < axes_.size(); ++i) {
    if (axes_[i].name == name) return i;
  }
  throw StructuralError("no axis '" + name + "' in tensor " + describe(axes_));
}

std::size_t DiscreteTensor::cardinality(const std::string& name) const {
  return axes_[axis_index(name)].card;
}

AxisSet DiscreteTensor::axis_names() const {
  AxisSet s;
  for (const auto& a : axes_) s.insert(a.name);
  return s;
}

std::vector<std::size_t> DiscreteTensor::strides() const {
  std::vector<std::size_t> st(axes_.size());
  std::size_t s = 1;
  for (std::size_t i = axes_.size(); i-- > 0;) {
    st[i] = s;
    s *= axes_[i].card;
  }
  return st;
}

double DiscreteTensor::at(std::span<const std::size_t> index) const {
  if (index.size() != axes_.size()) {
    throw StructuralError("index rank mismatch");
  }
  std::size_t flat = 0;
  for (std::size_t i = 0; i < axes_.size(); ++i) {
    if (index[i] >= axes_[i].card) throw StructuralError("index out of range");
    flat = flat * axes_[i].card + index[i];
  }
  return (*data_)[flat];
}

double DiscreteTensor::sum() const {
  return std::accumulate(data_->begin(), data_->end(), 0.0);
}

bool DiscreteTensor::is_normalized(double tol) const {
  return std::abs(sum() - 1.0) <= tol;
}

DiscreteTensor DiscreteTensor::renamed(const std::string& from,
                                       const std::string& to) const {
  auto axes = axes_;
  axes[axis_index(from)].name = to;
  check_axes(axes);
  return DiscreteTensor(Unchecked{}, std::move(axes), data_);
}

DiscreteTensor DiscreteTensor::permuted(
    const std::vector<std::string>& order) const {
  if (order.size() != axes_.size()) {
    throw StructuralError("permutation does not name every axis of " +
                          describe(axes_));
  }
  std::vector<std::size_t> src(order.size());
  bool identity = true;
  for (std::size_t i = 0; i < order.size(); ++i) {
    src[i] = axis_index(order[i]);
    identity = identity && src[i] == i;
  }
  if (identity) return *this;
  std::vector<Axis> axes(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) axes[i] = axes_[src[i]];
  check_axes(axes);
  const auto old_stride = strides();
  std::vector<std::size_t> stride(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) stride[i] = old_stride[src[i]];
  std::vector<double> out(size());
  std::vector<std::size_t> idx(order.size(), 0);
  std::size_t off = 0;
  for (std::size_t f = 0; f < out.size(); ++f) {
    out[f] = (*data_)[off];
    for (std::size_t a = order.size(); a-- > 0;) {
      if (++idx[a] < axes[a].card) {
        off += stride[a];
        break;
      }
      off -= stride[a] * (axes[a].card - 1);
      idx[a] = 0;
    }
  }
  return DiscreteTensor(Unchecked{}, std::move(axes),
                        std::make_shared<const std::vector<double>>(
                            std::move(out)));
}

DiscreteTensor DiscreteTensor::canonical() const {
  std::vector<std::string> order;
  for (const auto& a : axes_) order.push_back(a.name);
  std::sort(order.begin(), order.end());
  return permuted(order);
}

DiscreteTensor DiscreteTensor::scaled(double factor) const {
  if (!(factor >= 0.0) || !std::isfinite(factor)) {
    throw StructuralError("scale factor must be finite and non-negative");
  }
  std::vector<double> out(data_->begin(), data_->end());
  for (double& v : out) v *= factor;
  return DiscreteTensor(Unchecked{}, axes_,
                        std::make_shared<const std::vector<double>>(
                            std::move(out)));
}

double max_abs_difference(const DiscreteTensor& a, const DiscreteTensor& b) {
  if (a.axis_names() != b.axis_names()) {
    return std::numeric_limits<double>::infinity();
  }
  for (const auto& ax : a.axes()) {
    if (b.cardinality(ax.name) != ax.card) {
      return std::numeric_limits<double>::infinity();
    }
  }
  std::vector<std::string> order;
  for (const auto& ax : a.axes()) order.push_back(ax.name);
  const auto bp = b.permuted(order);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - bp[i]));
  }
  return m;
}

bool approx_equal(const DiscreteTensor& a, const DiscreteTensor& b,
                  double tol) {
  return max_abs_difference(a, b) <= tol;
}

DiscreteTensor contract(std::span<const DiscreteTensor> factors,
                        const AxisSet& keep_axes) {
  std::map<std::string, std::size_t> cards;
  for (const auto& f : factors) {
    for (const auto& a : f.axes()) {
      auto [it, inserted] = cards.emplace(a.name, a.card);
      if (!inserted && it->second != a.card) {
        throw StructuralError("axis '" + a.name +
                              "' has mismatched cardinalities " +
                              std::to_string(it->second) + " and " +
                              std::to_string(a.card));
      }
    }
  }
  for (const auto& k : keep_axes) {
    if (!cards.count(k)) {
      throw StructuralError("keep axis '" + k + "' not present in any factor");
    }
  }

  std::vector<DiscreteTensor> pool(factors.begin(), factors.end());
  while (true) {
    // Pick the summed-out axis whose elimination builds the smallest table.
    std::string best;
    std::size_t best_cost = std::numeric_limits<std::size_t>::max();
    for (const auto& [name, card] : cards) {
      if (keep_axes.count(name)) continue;
      std::map<std::string, std::size_t> u;
      bool present = false;
      for (const auto& f : pool) {
        if (!f.has_axis(name)) continue;
        present = true;
        for (const auto& a : f.axes()) u.emplace(a.name, a.card);
      }
      if (!present) continue;
      std::size_t cost = 1;
      for (const auto& [n, c] : u) cost *= c;
      if (cost < best_cost) {
        best_cost = cost;
        best = name;
      }
    }
    if (best.empty()) break;
    std::vector<const DiscreteTensor*> group;
    std::vector<DiscreteTensor> rest;
    std::vector<Axis> out_axes;
    for (const auto& f : pool) {
      if (!f.has_axis(best)) {
        rest.push_back(f);
        continue;
      }
      group.push_back(&f);
      for (const auto& a : f.axes()) {
        if (a.name == best) continue;
        if (std::none_of(out_axes.begin(), out_axes.end(),
                         [&](const Axis& b) { return b.name == a.name; })) {
          out_axes.push_back(a);
        }
      }
    }
    rest.push_back(product_reduce(group, out_axes));
    pool = std::move(rest);
  }

  std::vector<Axis> out_axes;
  for (const auto& k : keep_axes) out_axes.push_back({k, cards.at(k)});
  std::vector<const DiscreteTensor*> all;
  for (const auto& f : pool) all.push_back(&f);
  return product_reduce(all, out_axes);
}

DiscreteTensor contract(std::initializer_list<DiscreteTensor> factors,
                        const AxisSet& keep_axes) {
  return contract(std::span<const DiscreteTensor>(factors.begin(),
                                                  factors.size()),
                  keep_axes);
}

DiscreteTensor marginal(const DiscreteTensor& t, const AxisSet& keep_axes) {
  return contract({t}, keep_axes);
}

DiscreteTensor multiply(const DiscreteTensor& a, const DiscreteTensor& b) {
  AxisSet keep = a.axis_names();
  auto bn = b.axis_names();
  keep.insert(bn.begin(), bn.end());
  return contract({a, b}, keep);
}

DiscreteTensor normalize(const DiscreteTensor& t, const AxisSet& over) {
  for (const auto& o : over) {
    if (!t.has_axis(o)) {
      throw StructuralError("normalize: no axis '" + o + "'");
    }
  }
  std::vector<std::string> rest;
  for (const auto& a : t.axes()) {
    if (!over.count(a.name)) rest.push_back(a.name);
  }
  std::size_t groups = 0;
  const auto g = group_index(t, rest, &groups);
  std::vector<double> sums(groups, 0.0);
  for (std::size_t i = 0; i < t.size(); ++i) sums[g[i]] += t[i];
  for (double s : sums) {
    if (!(s > 0.0)) {
      throw DegenerateDistributionError("normalize: slice sums to zero");
    }
  }
  std::vector<double> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = t[i] / sums[g[i]];
  return DiscreteTensor(t.axes(), std::move(out)).canonical();
}

DiscreteTensor normalize(const DiscreteTensor& t) {
  return normalize(t, t.axis_names());
}

double entropy(const DiscreteTensor& t) {
  require_normalized(t, "entropy");
  double h = 0.0;
  for (double p : t.data()) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::max(h, 0.0);
}

DiscreteTensor conditional_entropy(const DiscreteTensor& joint,
                                   const AxisSet& given) {
  for (const auto& name : given) {
    if (!joint.has_axis(name)) {
      throw StructuralError("conditional_entropy: no axis '" + name + "'");
    }
  }
  require_normalized(joint, "conditional_entropy");
  const auto order = sorted_names(given);
  std::size_t groups = 0;
  const auto g = group_index(joint, order, &groups);
  std::vector<double> mass(groups, 0.0), h(groups, 0.0);
  for (std::size_t i = 0; i < joint.size(); ++i) mass[g[i]] += joint[i];
  for (std::size_t i = 0; i < joint.size(); ++i) {
    const double m = mass[g[i]];
    if (joint[i] > 0.0 && m > 0.0) {
      const double c = joint[i] / m;
      h[g[i]] -= c * std::log(c);
    }
  }
  for (double& v : h) v = std::max(v, 0.0);
  std::vector<Axis> axes;
  for (const auto& name : order) axes.push_back({name, joint.cardinality(name)});
  return DiscreteTensor(std::move(axes), std::move(h));
}

double log_sum_exp(const DiscreteTensor& scores) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : scores.data()) m = std::max(m, v);
  double s = 0.0;
  for (double v : scores.data()) s += std::exp(v - m);
  return m + std::log(s);
}

DiscreteTensor softmax(const DiscreteTensor& scores) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : scores.data()) {
    if (std::isnan(v)) throw StructuralError("softmax: NaN score");
    m = std::max(m, v);
  }
  std::vector<double> out(scores.size());
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(scores[i] - m);
    s += out[i];
  }
  for (double& v : out) v /= s;
  return DiscreteTensor(scores.axes(), std::move(out)).canonical();
}

double kl_divergence(const DiscreteTensor& p, const DiscreteTensor& q) {
  if (p.axis_names() != q.axis_names()) {
    throw StructuralError("kl_divergence: axis sets differ");
  }
  require_normalized(p, "kl_divergence");
  require_normalized(q, "kl_divergence");
  std::vector<std::string> order;
  for (const auto& a : p.axes()) {
    if (q.cardinality(a.name) != a.card) {
      throw StructuralError("kl_divergence: cardinality mismatch on '" +
                            a.name + "'");
    }
    order.push_back(a.name);
  }
  const auto qa = q.permuted(order);
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (qa[i] <= 0.0) {
      throw DivergenceUndefinedError(
          "kl_divergence: p has mass where q is zero");
    }
    kl += p[i] * std::log(p[i] / qa[i]);
  }
  return std::max(kl, 0.0);
}

nlohmann::json to_json(const DiscreteTensor& t) {
  nlohmann::json axes = nlohmann::json::array();
  for (const auto& a : t.axes()) axes.push_back({a.name, a.card});
  return {{"axes", axes},
          {"data", std::vector<double>(t.data().begin(), t.data().end())}};
}

DiscreteTensor tensor_from_json(const nlohmann::json& j) {
  std::vector<Axis> axes;
  for (const auto& a : j.at("axes")) {
    axes.push_back({a.at(0).get<std::string>(), a.at(1).get<std::size_t>()});
  }
  return DiscreteTensor(std::move(axes), j.at("data").get<std::vector<double>>());
}

}  // namespace efe
