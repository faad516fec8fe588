#pragma once

#include <array>
#include <cmath>
#include <type_traits>

#include "metapde/ad/graph.hpp"
#include "metapde/error.hpp"

namespace metapde::ad {

/// Truncated second-order Taylor jet along up to three input directions.
///
/// `d[i]` holds the first directional derivative along probed direction i
/// (i < n1); `dd[i]` holds the pure second derivative for i < n2 <= n1. Mixed
/// second derivatives are not carried. T is `double` for plain evaluation or
/// `Var` when each coefficient is a node on a tape (batched over points).
///
/// Entries beyond n1/n2 are absent and treated as zero; combining jets of
/// different widths promotes to the wider one.
template <class T>
struct Jet2 {
  static constexpr int kMaxDirections = 3;

  T v{};
  std::array<T, kMaxDirections> d{};
  std::array<T, kMaxDirections> dd{};
  int n1 = 0;
  int n2 = 0;

  bool has_d(int i) const { return i < n1; }
  bool has_dd(int i) const { return i < n2; }

  static Jet2 constant(T value) {
    Jet2 j;
    j.v = value;
    return j;
  }
};

/// Input coordinate seeded along direction `dir` of an (n1, n2) jet.
inline Jet2<double> seed(double x, int dir, int n1, int n2) {
  require(n1 <= Jet2<double>::kMaxDirections && n2 <= n1, "seed: bad jet shape");
  Jet2<double> j;
  j.v = x;
  j.n1 = n1;
  j.n2 = n2;
  for (int i = 0; i < n1; ++i) j.d[static_cast<std::size_t>(i)] = (i == dir) ? 1.0 : 0.0;
  for (int i = 0; i < n2; ++i) j.dd[static_cast<std::size_t>(i)] = 0.0;
  return j;
}

namespace jet_detail {

template <class T>
T powi(const T& x, int k) {
  if constexpr (std::is_same_v<T, double>) {
    return std::pow(x, k);
  } else {
    return pow(x, k);
  }
}

// f(a) with f0 = f(a.v), f1 = f'(a.v), f2 = f''(a.v).
template <class T>
Jet2<T> chain(const Jet2<T>& a, const T& f0, const T& f1, const T& f2) {
  Jet2<T> r;
  r.n1 = a.n1;
  r.n2 = a.n2;
  r.v = f0;
  for (int i = 0; i < a.n1; ++i) {
    const auto k = static_cast<std::size_t>(i);
    r.d[k] = f1 * a.d[k];
    if (i < a.n2) r.dd[k] = f1 * a.dd[k] + f2 * (a.d[k] * a.d[k]);
  }
  return r;
}

}  // namespace jet_detail

template <class T>
Jet2<T> operator+(const Jet2<T>& a, const Jet2<T>& b) {
  Jet2<T> r;
  r.n1 = std::max(a.n1, b.n1);
  r.n2 = std::max(a.n2, b.n2);
  r.v = a.v + b.v;
  for (int i = 0; i < r.n1; ++i) {
    const auto k = static_cast<std::size_t>(i);
    r.d[k] = a.has_d(i) ? (b.has_d(i) ? a.d[k] + b.d[k] : a.d[k]) : b.d[k];
    if (i < r.n2) r.dd[k] = a.has_dd(i) ? (b.has_dd(i) ? a.dd[k] + b.dd[k] : a.dd[k]) : b.dd[k];
  }
  return r;
}

template <class T>
Jet2<T> operator-(const Jet2<T>& a) {
  Jet2<T> r;
  r.n1 = a.n1;
  r.n2 = a.n2;
  r.v = -a.v;
  for (int i = 0; i < a.n1; ++i) {
    const auto k = static_cast<std::size_t>(i);
    r.d[k] = -a.d[k];
    if (i < a.n2) r.dd[k] = -a.dd[k];
  }
  return r;
}

template <class T>
Jet2<T> operator-(const Jet2<T>& a, const Jet2<T>& b) {
  return a + (-b);
}

// (a*b).dd_i = a.dd_i b.v + 2 a.d_i b.d_i + a.v b.dd_i
template <class T>
Jet2<T> operator*(const Jet2<T>& a, const Jet2<T>& b) {
  Jet2<T> r;
  r.n1 = std::max(a.n1, b.n1);
  r.n2 = std::max(a.n2, b.n2);
  r.v = a.v * b.v;
  for (int i = 0; i < r.n1; ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (a.has_d(i) && b.has_d(i)) {
      r.d[k] = a.d[k] * b.v + a.v * b.d[k];
    } else if (a.has_d(i)) {
      r.d[k] = a.d[k] * b.v;
    } else {
      r.d[k] = a.v * b.d[k];
    }
    if (i >= r.n2) continue;
    T acc{};
    bool any = false;
    auto add = [&](const T& term) {
      acc = any ? acc + term : term;
      any = true;
    };
    if (a.has_dd(i)) add(a.dd[k] * b.v);
    if (a.has_d(i) && b.has_d(i)) add(2.0 * (a.d[k] * b.d[k]));
    if (b.has_dd(i)) add(a.v * b.dd[k]);
    r.dd[k] = acc;
  }
  return r;
}

template <class T>
Jet2<T> reciprocal(const Jet2<T>& a) {
  const T inv = 1.0 / a.v;
  const T inv2 = inv * inv;
  return jet_detail::chain(a, inv, -inv2, 2.0 * (inv2 * inv));
}

template <class T>
Jet2<T> operator/(const Jet2<T>& a, const Jet2<T>& b) {
  return a * reciprocal(b);
}

// Scalar (double) coefficients.
template <class T>
Jet2<T> operator*(double c, const Jet2<T>& a) {
  Jet2<T> r = a;
  r.v = c * a.v;
  for (int i = 0; i < a.n1; ++i) r.d[static_cast<std::size_t>(i)] = c * a.d[static_cast<std::size_t>(i)];
  for (int i = 0; i < a.n2; ++i) r.dd[static_cast<std::size_t>(i)] = c * a.dd[static_cast<std::size_t>(i)];
  return r;
}
template <class T>
Jet2<T> operator*(const Jet2<T>& a, double c) {
  return c * a;
}
template <class T>
Jet2<T> operator+(const Jet2<T>& a, double c) {
  Jet2<T> r = a;
  r.v = a.v + c;
  return r;
}
template <class T>
Jet2<T> operator+(double c, const Jet2<T>& a) {
  return a + c;
}
template <class T>
Jet2<T> operator-(const Jet2<T>& a, double c) {
  return a + (-c);
}
template <class T>
Jet2<T> operator-(double c, const Jet2<T>& a) {
  return (-a) + c;
}

template <class T>
Jet2<T> sin(const Jet2<T>& a) {
  using std::cos;
  using std::sin;
  const T s = sin(a.v);
  return jet_detail::chain(a, s, T(cos(a.v)), T(-s));
}

template <class T>
Jet2<T> cos(const Jet2<T>& a) {
  using std::cos;
  using std::sin;
  const T c = cos(a.v);
  return jet_detail::chain(a, c, T(-sin(a.v)), T(-c));
}

template <class T>
Jet2<T> exp(const Jet2<T>& a) {
  using std::exp;
  const T e = exp(a.v);
  return jet_detail::chain(a, e, e, e);
}

template <class T>
Jet2<T> log(const Jet2<T>& a) {
  using std::log;
  const T inv = 1.0 / a.v;
  return jet_detail::chain(a, T(log(a.v)), inv, T(-(inv * inv)));
}

template <class T>
Jet2<T> sqrt(const Jet2<T>& a) {
  using std::sqrt;
  const T s = sqrt(a.v);
  const T f1 = 0.5 / s;
  return jet_detail::chain(a, s, f1, T(-0.25 / (s * s * s)));
}

template <class T>
Jet2<T> tanh(const Jet2<T>& a) {
  using std::tanh;
  const T t = tanh(a.v);
  const T f1 = 1.0 - t * t;
  return jet_detail::chain(a, t, f1, T(-2.0 * (t * f1)));
}

template <class T>
Jet2<T> pow(const Jet2<T>& a, int k) {
  require(k >= 0, "pow: exponent must be non-negative");
  if (k == 0) return Jet2<T>::constant(T(jet_detail::powi(a.v, 0)));
  const T f1 = double(k) * jet_detail::powi(a.v, k - 1);
  if (k == 1) return a;
  const T f2 = double(k) * double(k - 1) * jet_detail::powi(a.v, k - 2);
  return jet_detail::chain(a, jet_detail::powi(a.v, k), f1, f2);
}

}  // namespace metapde::ad
