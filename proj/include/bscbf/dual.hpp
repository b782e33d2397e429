#pragma once

// Forward-mode dual numbers. Nesting Dual<Dual<T,N>,N> yields exact second
// derivatives; deeper nesting is how derivatives of composed generator
// expressions are obtained.

#include <array>
#include <cmath>
#include <cstddef>
#include <type_traits>

namespace bscbf {

template <class T, int N>
struct Dual {
    T v{};
    std::array<T, N> d{};

    Dual() = default;
    Dual(double c) : v(c) {}  // NOLINT: constants promote implicitly
    template <class U = T, class = std::enable_if_t<!std::is_same_v<U, double>>>
    explicit Dual(const T& val) : v(val) {}
    Dual(const T& val, const std::array<T, N>& der) : v(val), d(der) {}

    Dual& operator+=(const Dual& o) {
        v += o.v;
        for (int i = 0; i < N; ++i) d[i] += o.d[i];
        return *this;
    }
    Dual& operator-=(const Dual& o) {
        v -= o.v;
        for (int i = 0; i < N; ++i) d[i] -= o.d[i];
        return *this;
    }
    Dual& operator*=(const Dual& o) {
        for (int i = 0; i < N; ++i) d[i] = d[i] * o.v + v * o.d[i];
        v *= o.v;
        return *this;
    }
    Dual& operator/=(const Dual& o) {
        const T inv = T(1.0) / o.v;
        const T q = v * inv;
        for (int i = 0; i < N; ++i) d[i] = (d[i] - q * o.d[i]) * inv;
        v = q;
        return *this;
    }
    Dual& operator+=(double c) {
        v += c;
        return *this;
    }
    Dual& operator-=(double c) {
        v -= c;
        return *this;
    }
    Dual& operator*=(double c) {
        v *= c;
        for (auto& x : d) x *= c;
        return *this;
    }
    Dual& operator/=(double c) { return *this *= (1.0 / c); }
};

template <class>
struct is_dual : std::false_type {};
template <class T, int N>
struct is_dual<Dual<T, N>> : std::true_type {};

/// Nesting depth: 0 for double, 1 + depth(T) for Dual<T, N>.
template <class T>
struct level_of : std::integral_constant<int, 0> {};
template <class T, int N>
struct level_of<Dual<T, N>> : std::integral_constant<int, 1 + level_of<T>::value> {};
template <class T>
inline constexpr int level_of_v = level_of<T>::value;

template <int N, int K>
struct ladder {
    using type = Dual<typename ladder<N, K - 1>::type, N>;
};
template <int N>
struct ladder<N, 0> {
    using type = double;
};
/// Scalar type at nesting level K for an N-dimensional state.
template <int N, int K>
using Lvl = typename ladder<N, K>::type;

/// Deepest scalar level type-erased fields are instantiated at. Level 2r-ish is
/// needed for a relative-degree-r chain, so this supports r <= 3.
inline constexpr int kMaxLevel = 6;

// Arithmetic ----------------------------------------------------------------

template <class T, int N>
Dual<T, N> operator+(Dual<T, N> a, const Dual<T, N>& b) { return a += b; }
template <class T, int N>
Dual<T, N> operator-(Dual<T, N> a, const Dual<T, N>& b) { return a -= b; }
template <class T, int N>
Dual<T, N> operator*(Dual<T, N> a, const Dual<T, N>& b) { return a *= b; }
template <class T, int N>
Dual<T, N> operator/(Dual<T, N> a, const Dual<T, N>& b) { return a /= b; }

template <class T, int N>
Dual<T, N> operator+(Dual<T, N> a, double c) { return a += c; }
template <class T, int N>
Dual<T, N> operator+(double c, Dual<T, N> a) { return a += c; }
template <class T, int N>
Dual<T, N> operator-(Dual<T, N> a, double c) { return a -= c; }
template <class T, int N>
Dual<T, N> operator-(double c, const Dual<T, N>& a) { return Dual<T, N>(c) - a; }
template <class T, int N>
Dual<T, N> operator*(Dual<T, N> a, double c) { return a *= c; }
template <class T, int N>
Dual<T, N> operator*(double c, Dual<T, N> a) { return a *= c; }
template <class T, int N>
Dual<T, N> operator/(Dual<T, N> a, double c) { return a /= c; }
template <class T, int N>
Dual<T, N> operator/(double c, const Dual<T, N>& a) { return Dual<T, N>(c) / a; }

template <class T, int N>
Dual<T, N> operator-(Dual<T, N> a) {
    a.v = -a.v;
    for (auto& x : a.d) x = -x;
    return a;
}
template <class T, int N>
Dual<T, N> operator+(const Dual<T, N>& a) { return a; }

/// Innermost real value.
inline double value_of(double x) { return x; }
template <class T, int N>
double value_of(const Dual<T, N>& x) { return value_of(x.v); }

template <class T, int N>
bool operator<(const Dual<T, N>& a, const Dual<T, N>& b) { return value_of(a) < value_of(b); }
template <class T, int N>
bool operator>(const Dual<T, N>& a, const Dual<T, N>& b) { return value_of(a) > value_of(b); }
template <class T, int N>
bool operator<(const Dual<T, N>& a, double b) { return value_of(a) < b; }
template <class T, int N>
bool operator>(const Dual<T, N>& a, double b) { return value_of(a) > b; }

// Elementary functions via the chain rule: f(a) with f'(a) supplied.
namespace detail {
template <class T, int N>
Dual<T, N> chain(const Dual<T, N>& a, const T& fv, const T& dfv) {
    Dual<T, N> r;
    r.v = fv;
    for (int i = 0; i < N; ++i) r.d[i] = dfv * a.d[i];
    return r;
}
}  // namespace detail

using std::cos;
using std::exp;
using std::log;
using std::sin;
using std::sqrt;
using std::tanh;

template <class T, int N>
Dual<T, N> exp(const Dual<T, N>& a) {
    const T e = exp(a.v);
    return detail::chain(a, e, e);
}
template <class T, int N>
Dual<T, N> log(const Dual<T, N>& a) { return detail::chain(a, log(a.v), T(1.0) / a.v); }
template <class T, int N>
Dual<T, N> sqrt(const Dual<T, N>& a) {
    const T s = sqrt(a.v);
    return detail::chain(a, s, T(0.5) / s);
}
template <class T, int N>
Dual<T, N> sin(const Dual<T, N>& a) { return detail::chain(a, sin(a.v), cos(a.v)); }
template <class T, int N>
Dual<T, N> cos(const Dual<T, N>& a) { return detail::chain(a, cos(a.v), -sin(a.v)); }
template <class T, int N>
Dual<T, N> tanh(const Dual<T, N>& a) {
    const T t = tanh(a.v);
    return detail::chain(a, t, 1.0 - t * t);
}

/// Integer power by repeated squaring; valid for double and any Dual level.
template <class T>
T ipow(const T& x, int e) {
    if (e < 0) return T(1.0) / ipow(x, -e);
    T result(1.0);
    T base = x;
    while (e > 0) {
        if (e & 1) result = result * base;
        e >>= 1;
        if (e) base = base * base;
    }
    return result;
}

// Derivative extraction ------------------------------------------------------

template <class T, int N>
using Hyper = Dual<Dual<T, N>, N>;

/// Seeds x so that evaluating f on the result gives value, gradient and
/// Hessian in type T.
template <class T, int N>
std::array<Hyper<T, N>, N> seed_hyper(const std::array<T, N>& x) {
    std::array<Hyper<T, N>, N> out;
    for (int i = 0; i < N; ++i) {
        Dual<T, N> inner;
        inner.v = x[i];
        inner.d.fill(T(0.0));
        inner.d[i] = T(1.0);
        out[i].v = inner;
        for (int j = 0; j < N; ++j) {
            out[i].d[j] = Dual<T, N>(T(i == j ? 1.0 : 0.0));
        }
    }
    return out;
}

template <class T, int N>
struct Jet2 {
    T value;
    std::array<T, N> grad;
    std::array<T, N * N> hess;  // row-major
};

template <class T, int N>
Jet2<T, N> extract_jet(const Hyper<T, N>& r) {
    Jet2<T, N> j;
    j.value = r.v.v;
    for (int i = 0; i < N; ++i) j.grad[i] = r.v.d[i];
    for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b) j.hess[a * N + b] = r.d[a].d[b];
    return j;
}

}  // namespace bscbf
