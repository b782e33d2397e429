#pragma once

// Type-erased vector fields that can be evaluated at every scalar level of the
// dual-number ladder. User code supplies one generic callable; it is
// instantiated for Lvl<N,0> .. Lvl<N,kMaxLevel>.

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <tuple>
#include <type_traits>
#include <utility>

#include <Eigen/Dense>

#include "bscbf/dual.hpp"
#include "bscbf/error.hpp"

namespace bscbf {

template <int N>
using Vec = Eigen::Matrix<double, N, 1>;
template <int R, int C>
using Mat = Eigen::Matrix<double, R, C>;

template <class T, int N>
using State = std::array<T, N>;

template <int N>
State<double, N> to_array(const Vec<N>& v) {
    State<double, N> a;
    for (int i = 0; i < N; ++i) a[i] = v[i];
    return a;
}

template <int N>
Vec<N> to_vec(const State<double, N>& a) {
    Vec<N> v;
    for (int i = 0; i < N; ++i) v[i] = a[i];
    return v;
}

/// Field x -> R^M, evaluable at any ladder level up to kMaxLevel.
template <int N, int M>
class LadderFn {
public:
    template <int K>
    using Fn = std::function<std::array<Lvl<N, K>, M>(const State<Lvl<N, K>, N>&)>;

    LadderFn() = default;

    /// Wraps a generic callable. The callable may return std::array<T, M>, or a
    /// bare T when M == 1. Levels the callable cannot support (it throws or
    /// guards with if constexpr) are its own concern.
    template <class F,
              class = std::enable_if_t<!std::is_same_v<std::decay_t<F>, LadderFn>>>
    explicit LadderFn(F f) : fns_(std::make_shared<Table>(make_table(std::move(f)))) {}

    bool valid() const { return static_cast<bool>(fns_); }

    template <class T>
    std::array<T, M> operator()(const State<T, N>& x) const {
        constexpr int K = level_of_v<T>;
        static_assert(K <= kMaxLevel, "scalar level exceeds kMaxLevel");
        if (!fns_) fail(ErrorKind::Evaluation, "empty field");
        return std::get<K>(*fns_)(x);
    }

    std::array<double, M> operator()(const Vec<N>& x) const { return (*this)(to_array<N>(x)); }

private:
    template <std::size_t... K>
    static auto table_type(std::index_sequence<K...>) -> std::tuple<Fn<static_cast<int>(K)>...>;
    using Table = decltype(table_type(std::make_index_sequence<kMaxLevel + 1>{}));

    template <class F, std::size_t... K>
    static Table make_table_impl(const F& f, std::index_sequence<K...>) {
        return Table{Fn<static_cast<int>(K)>(wrap<static_cast<int>(K)>(f))...};
    }
    template <class F>
    static Table make_table(F f) {
        return make_table_impl(f, std::make_index_sequence<kMaxLevel + 1>{});
    }

    template <int K, class F>
    static auto wrap(const F& f) {
        using T = Lvl<N, K>;
        return [f](const State<T, N>& x) -> std::array<T, M> {
            auto r = f(x);
            if constexpr (std::is_same_v<std::decay_t<decltype(r)>, std::array<T, M>>) {
                return r;
            } else {
                static_assert(M == 1, "scalar return needs M == 1");
                return std::array<T, M>{T(r)};
            }
        };
    }

    std::shared_ptr<const Table> fns_;
};

template <int N>
using ScalarFn = LadderFn<N, 1>;

/// Value, gradient and Hessian of a scalar ladder field at a point of level T.
/// Requires level_of<T> + 2 <= kMaxLevel.
template <int N, class T>
Jet2<T, N> jet(const ScalarFn<N>& f, const State<T, N>& x) {
    static_assert(level_of_v<T> + 2 <= kMaxLevel, "jet needs two spare ladder levels");
    return extract_jet<T, N>(f(seed_hyper<T, N>(x))[0]);
}

}  // namespace bscbf
