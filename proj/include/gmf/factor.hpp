#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gmf/errors.hpp"

namespace gmf {

using VarId = int;

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

/// A discrete random variable: dense id, state count, optional display name.
struct Variable {
  VarId id = 0;
  int cardinality = 1;
  std::string name;
};

/// Default ceiling on the number of cells any single operation may
/// materialize; callers raise it deliberately when they mean to.
inline constexpr std::size_t default_cap = std::size_t{1} << 24;

/// Total number of cells of a dense table with the given axis sizes.
/// Throws capacity_error on overflow; the empty shape has one cell.
inline std::size_t table_size(std::span<const int> shape) {
  std::size_t n = 1;
  for (int s : shape) {
    if (s < 1) throw std::invalid_argument("table axis of size " + std::to_string(s));
    if (__builtin_mul_overflow(n, static_cast<std::size_t>(s), &n))
      throw capacity_error("table size overflows size_t");
  }
  return n;
}

/// Row-major strides, last axis fastest.  strides(shape)[i] is the flat
/// distance between entries that differ by one in axis i.
inline std::vector<std::size_t> table_strides(std::span<const int> shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;)
    s[i - 1] = s[i] * static_cast<std::size_t>(shape[i]);
  return s;
}

/// Dense table over an ordered variable scope.  Values are natural-log
/// potentials unless a function documents otherwise (marginals and messages
/// are linear probabilities).  Layout is row-major with the *last* scope
/// variable fastest-varying.  -inf is a legal value (zero mass); NaN and
/// +inf are not.
struct Factor {
  std::vector<VarId> scope;
  std::vector<int> shape;
  std::vector<double> values;

  Factor() = default;
  Factor(std::vector<VarId> sc, std::vector<int> sh, double fill = 0.0)
      : scope(std::move(sc)), shape(std::move(sh)) {
    if (scope.size() != shape.size())
      throw std::invalid_argument("factor scope/shape length mismatch");
    values.assign(table_size(shape), fill);
  }
  Factor(std::vector<VarId> sc, std::vector<int> sh, std::vector<double> vals)
      : scope(std::move(sc)), shape(std::move(sh)), values(std::move(vals)) {
    if (scope.size() != shape.size())
      throw std::invalid_argument("factor scope/shape length mismatch");
    if (values.size() != table_size(shape))
      throw std::invalid_argument("factor table size does not match shape");
  }

  std::size_t size() const { return values.size(); }
  bool scalar() const { return scope.empty(); }

  int position_of(VarId v) const {
    for (std::size_t i = 0; i < scope.size(); ++i)
      if (scope[i] == v) return static_cast<int>(i);
    return -1;
  }

  /// Structural checks: distinct scope, positive axes, table size, no NaN,
  /// no +inf.  Throws on violation.
  void check(const std::string& where) const {
    if (scope.size() != shape.size())
      throw std::invalid_argument(where + ": scope/shape length mismatch");
    for (std::size_t i = 0; i < scope.size(); ++i)
      for (std::size_t j = i + 1; j < scope.size(); ++j)
        if (scope[i] == scope[j])
          throw std::invalid_argument(where + ": repeated variable " +
                                      std::to_string(scope[i]) + " in scope");
    if (values.size() != table_size(shape))
      throw std::invalid_argument(where + ": table size does not match shape");
    for (double v : values) {
      if (std::isnan(v)) throw numeric_error(where + ": NaN table entry");
      if (v == std::numeric_limits<double>::infinity())
        throw numeric_error(where + ": +inf table entry");
    }
  }
};

/// Odometer over a shape, row-major with the last axis fastest.  Any number
/// of "views" (tables aligned with a subset of the axes) can be registered;
/// their flat offsets are maintained incrementally as the odometer advances.
class Walker {
 public:
  explicit Walker(std::span<const int> shape)
      : shape_(shape.begin(), shape.end()), digits_(shape.size(), 0) {
    total_ = table_size(shape);
  }

  /// contrib[p] is the offset change when digit p increments by one.
  /// base is the view's offset at the all-zero configuration.
  int add_view(std::span<const std::ptrdiff_t> contrib, std::ptrdiff_t base = 0) {
    assert(contrib.size() == shape_.size());
    View v;
    v.adjust.resize(shape_.size());
    for (std::size_t p = 0; p < shape_.size(); ++p) {
      std::ptrdiff_t rewind = 0;
      for (std::size_t q = p + 1; q < shape_.size(); ++q)
        rewind += contrib[q] * (shape_[q] - 1);
      v.adjust[p] = contrib[p] - rewind;
    }
    v.offset = base;
    v.base = base;
    views_.push_back(std::move(v));
    return static_cast<int>(views_.size()) - 1;
  }

  std::size_t count() const { return total_; }
  std::ptrdiff_t offset(int view) const { return views_[view].offset; }
  const std::vector<int>& digits() const { return digits_; }

  /// Step to the next configuration; false once the last one has been left.
  bool advance() {
    std::size_t p = shape_.size();
    while (p > 0) {
      --p;
      if (digits_[p] + 1 < shape_[p]) {
        ++digits_[p];
        for (std::size_t q = p + 1; q < shape_.size(); ++q) digits_[q] = 0;
        for (View& v : views_) v.offset += v.adjust[p];
        return true;
      }
    }
    return false;
  }

  void reset() {
    for (int& d : digits_) d = 0;
    for (View& v : views_) v.offset = v.base;
  }

 private:
  struct View {
    std::vector<std::ptrdiff_t> adjust;
    std::ptrdiff_t offset = 0;
    std::ptrdiff_t base = 0;
  };
  std::vector<int> shape_;
  std::vector<int> digits_;
  std::size_t total_ = 1;
  std::vector<View> views_;
};

/// Per-axis offset contributions of `target` when iterating `host_scope`
/// with `host_shape`: contribution is target's stride if the host variable
/// appears in target's scope, zero otherwise.  Checks cardinality agreement.
inline std::vector<std::ptrdiff_t> stride_map(std::span<const VarId> host_scope,
                                              std::span<const int> host_shape,
                                              const Factor& target) {
  const auto tstrides = table_strides(target.shape);
  std::vector<std::ptrdiff_t> contrib(host_scope.size(), 0);
  for (std::size_t p = 0; p < host_scope.size(); ++p) {
    const int tp = target.position_of(host_scope[p]);
    if (tp >= 0) {
      if (target.shape[tp] != host_shape[p])
        throw std::invalid_argument("cardinality mismatch for variable " +
                                    std::to_string(host_scope[p]));
      contrib[p] = static_cast<std::ptrdiff_t>(tstrides[tp]);
    }
  }
  return contrib;
}

inline double log_sum_exp(std::span<const double> v) {
  double m = neg_inf;
  for (double x : v) m = std::max(m, x);
  if (m == neg_inf) return neg_inf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

/// Log-space product (entrywise sum) over the union scope.  The result's
/// scope lists a's variables first, then b's new ones, in original order.
inline Factor multiply(const Factor& a, const Factor& b) {
  std::vector<VarId> scope = a.scope;
  std::vector<int> shape = a.shape;
  for (std::size_t i = 0; i < b.scope.size(); ++i) {
    if (a.position_of(b.scope[i]) < 0) {
      scope.push_back(b.scope[i]);
      shape.push_back(b.shape[i]);
    }
  }
  Factor out(std::move(scope), std::move(shape));
  Walker w(out.shape);
  const int va = w.add_view(stride_map(out.scope, out.shape, a));
  const int vb = w.add_view(stride_map(out.scope, out.shape, b));
  std::size_t k = 0;
  do {
    out.values[k++] = a.values[w.offset(va)] + b.values[w.offset(vb)];
  } while (w.advance());
  return out;
}

/// Sum out everything not in `keep` (log-sum-exp).  The result's scope is
/// exactly `keep`, in the order given; keep must be a subset of f's scope.
/// keep may be empty, giving a scalar whose single cell is the log-sum over
/// the whole table.
inline Factor marginalize(const Factor& f, std::span<const VarId> keep) {
  std::vector<int> kshape(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const int p = f.position_of(keep[i]);
    if (p < 0)
      throw std::invalid_argument("marginalize: variable " +
                                  std::to_string(keep[i]) + " not in scope");
    kshape[i] = f.shape[p];
  }
  Factor out(std::vector<VarId>(keep.begin(), keep.end()), std::move(kshape),
             neg_inf);
  {
    Walker w(f.shape);
    const int vo = w.add_view(stride_map(f.scope, f.shape, out));
    std::size_t k = 0;
    do {
      double& m = out.values[w.offset(vo)];
      m = std::max(m, f.values[k++]);
    } while (w.advance());
  }
  std::vector<double> acc(out.size(), 0.0);
  {
    Walker w(f.shape);
    const int vo = w.add_view(stride_map(f.scope, f.shape, out));
    std::size_t k = 0;
    do {
      const double m = out.values[w.offset(vo)];
      if (m != neg_inf) acc[w.offset(vo)] += std::exp(f.values[k] - m);
      ++k;
    } while (w.advance());
  }
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out.values[i] != neg_inf) out.values[i] += std::log(acc[i]);
  return out;
}

/// Fix the scoped variables that appear in `evidence` and drop their axes.
/// Variables without evidence keep their original order.
inline Factor observe(const Factor& f, const std::map<VarId, int>& evidence) {
  std::vector<VarId> scope;
  std::vector<int> shape;
  std::ptrdiff_t base = 0;
  const auto strides = table_strides(f.shape);
  std::vector<std::ptrdiff_t> contrib;
  for (std::size_t p = 0; p < f.scope.size(); ++p) {
    const auto it = evidence.find(f.scope[p]);
    if (it == evidence.end()) {
      scope.push_back(f.scope[p]);
      shape.push_back(f.shape[p]);
      contrib.push_back(static_cast<std::ptrdiff_t>(strides[p]));
    } else {
      if (it->second < 0 || it->second >= f.shape[p])
        throw std::domain_error("evidence state " + std::to_string(it->second) +
                                " out of range for variable " +
                                std::to_string(f.scope[p]));
      base += static_cast<std::ptrdiff_t>(strides[p]) * it->second;
    }
  }
  Factor out(std::move(scope), std::move(shape));
  Walker w(out.shape);
  const int vf = w.add_view(contrib, base);
  std::size_t k = 0;
  do {
    out.values[k++] = f.values[w.offset(vf)];
  } while (w.advance());
  return out;
}

/// Shift a log table so it sums (in linear space) to one.
/// Throws numeric_error when the table has no mass.
inline void log_normalize(Factor& f) {
  const double z = log_sum_exp(f.values);
  if (z == neg_inf) throw numeric_error("normalizing a table with zero mass");
  if (std::isnan(z)) throw numeric_error("NaN while normalizing");
  for (double& v : f.values) v -= z;
}

/// Convert a log table to a linear probability table summing to one.
inline Factor to_linear(const Factor& f) {
  Factor out = f;
  log_normalize(out);
  for (double& v : out.values) v = std::exp(v);
  return out;
}

/// Expectation of a log table over a subset of its scope.
///
/// `weights` is a *linear* probability table whose scope is a subset of
/// f's scope (any axis order).  The result keeps f's remaining variables in
/// their original order; cells where positive weight meets a -inf entry are
/// -inf.  Zero-weight cells are skipped, so 0 * -inf never produces NaN.
/// An empty remainder yields a scalar factor.
inline Factor expect_over(const Factor& f, const Factor& weights) {
  std::vector<VarId> rest;
  std::vector<int> rshape;
  for (std::size_t p = 0; p < f.scope.size(); ++p) {
    if (weights.position_of(f.scope[p]) < 0) {
      rest.push_back(f.scope[p]);
      rshape.push_back(f.shape[p]);
    }
  }
  if (rest.size() + weights.scope.size() != f.scope.size())
    throw std::invalid_argument("expect_over: weight scope not a subset");
  Factor out(std::move(rest), std::move(rshape), 0.0);
  std::vector<char> has_inf(out.size(), 0);
  Walker w(f.shape);
  const int vo = w.add_view(stride_map(f.scope, f.shape, out));
  const int vw = w.add_view(stride_map(f.scope, f.shape, weights));
  std::size_t k = 0;
  do {
    const double p = weights.values[w.offset(vw)];
    if (p != 0.0) {
      const double x = f.values[k];
      if (x == neg_inf)
        has_inf[w.offset(vo)] = 1;
      else
        out.values[w.offset(vo)] += p * x;
    }
    ++k;
  } while (w.advance());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (has_inf[i]) out.values[i] = neg_inf;
  for (double v : out.values)
    if (std::isnan(v)) throw numeric_error("NaN in expected factor");
  return out;
}

/// Full contraction sum_x q(x) log_f(x) where `prob` (linear) covers exactly
/// f's variable set, in any axis order.  May return -inf, never NaN.
inline double expected_value(const Factor& f, const Factor& prob) {
  if (prob.scope.size() != f.scope.size())
    throw std::invalid_argument("expected_value: scopes differ");
  const Factor r = expect_over(f, prob);
  if (!r.scalar())
    throw std::invalid_argument("expected_value: scopes differ");
  return r.values[0];
}

/// Same table, axes permuted into `new_scope` order.
inline Factor reorder(const Factor& f, std::span<const VarId> new_scope) {
  if (new_scope.size() != f.scope.size())
    throw std::invalid_argument("reorder: scope size mismatch");
  std::vector<int> shape(new_scope.size());
  for (std::size_t i = 0; i < new_scope.size(); ++i) {
    const int p = f.position_of(new_scope[i]);
    if (p < 0) throw std::invalid_argument("reorder: variable not in scope");
    shape[i] = f.shape[p];
  }
  Factor out(std::vector<VarId>(new_scope.begin(), new_scope.end()),
             std::move(shape));
  Walker w(out.shape);
  const int vf = w.add_view(stride_map(out.scope, out.shape, f));
  std::size_t k = 0;
  do {
    out.values[k++] = f.values[w.offset(vf)];
  } while (w.advance());
  return out;
}

}  // namespace gmf
