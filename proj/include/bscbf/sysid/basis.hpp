#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bscbf/dual.hpp"
#include "bscbf/error.hpp"
#include "bscbf/field.hpp"

namespace bscbf::sysid {

/// Monomial features prod_i x_i^{e_i}; ordering is part of a fitted model.
template <int N>
class Basis {
public:
    using Exponents = std::array<int, N>;

    Basis() = default;
    explicit Basis(std::vector<Exponents> terms) : terms_(std::move(terms)) {
        require(!terms_.empty(), ErrorKind::Configuration, "basis needs at least one feature");
        for (const auto& t : terms_)
            for (int e : t) require(e >= 0, ErrorKind::Configuration, "basis exponents must be >= 0");
    }

    /// [1, x1, x2, x1^2, x2^2, x1 x2, x1^3, x2^3].
    static Basis cubic2() {
        static_assert(N == 2, "cubic2 is a two-state basis");
        return Basis({{0, 0}, {1, 0}, {0, 1}, {2, 0}, {0, 2}, {1, 1}, {3, 0}, {0, 3}});
    }

    /// All monomials of total degree <= deg, graded order.
    static Basis total_degree(int deg) {
        std::vector<Exponents> terms;
        for (int total = 0; total <= deg; ++total) {
            Exponents e{};
            collect(terms, e, 0, total);
        }
        return Basis(std::move(terms));
    }

    static Basis from_names(const std::vector<std::string>& names) {
        std::vector<Exponents> terms;
        for (const auto& n : names) terms.push_back(parse(n));
        return Basis(std::move(terms));
    }

    int size() const { return static_cast<int>(terms_.size()); }
    const std::vector<Exponents>& terms() const { return terms_; }

    std::string name(int k) const {
        const auto& t = terms_.at(k);
        std::string s;
        for (int i = 0; i < N; ++i) {
            if (t[i] == 0) continue;
            if (!s.empty()) s += "*";
            s += "x" + std::to_string(i + 1);
            if (t[i] > 1) s += "^" + std::to_string(t[i]);
        }
        return s.empty() ? "1" : s;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (int k = 0; k < size(); ++k) out.push_back(name(k));
        return out;
    }

    template <class T>
    std::vector<T> features(const State<T, N>& x) const {
        std::vector<T> phi;
        phi.reserve(terms_.size());
        for (const auto& t : terms_) {
            T v(1.0);
            for (int i = 0; i < N; ++i)
                if (t[i] > 0) v = v * ipow(x[i], t[i]);
            phi.push_back(v);
        }
        return phi;
    }

    Eigen::VectorXd row(const Vec<N>& x) const {
        const auto f = features<double>(to_array<N>(x));
        return Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
    }

    Eigen::MatrixXd design(const std::vector<Vec<N>>& xs) const {
        Eigen::MatrixXd phi(static_cast<Eigen::Index>(xs.size()), size());
        for (std::size_t i = 0; i < xs.size(); ++i) phi.row(static_cast<Eigen::Index>(i)) = row(xs[i]).transpose();
        return phi;
    }

    /// Weighted sum phi(x) . w, generic over the scalar level.
    template <class T>
    T combine(const State<T, N>& x, const Eigen::VectorXd& w) const {
        const auto phi = features<T>(x);
        T acc(0.0);
        for (std::size_t k = 0; k < phi.size(); ++k)
            if (w[static_cast<Eigen::Index>(k)] != 0.0) acc += phi[k] * w[static_cast<Eigen::Index>(k)];
        return acc;
    }

private:
    static void collect(std::vector<Exponents>& out, Exponents& e, int i, int remaining) {
        if (i == N - 1) {
            e[i] = remaining;
            out.push_back(e);
            return;
        }
        for (int k = remaining; k >= 0; --k) {
            e[i] = k;
            collect(out, e, i + 1, remaining - k);
        }
    }

    static Exponents parse(const std::string& name) {
        Exponents e{};
        if (name == "1") return e;
        std::size_t pos = 0;
        while (pos < name.size()) {
            auto end = name.find('*', pos);
            if (end == std::string::npos) end = name.size();
            const std::string factor = name.substr(pos, end - pos);
            require(factor.size() >= 2 && factor[0] == 'x', ErrorKind::Configuration,
                    "bad basis feature name '" + name + "'");
            const auto caret = factor.find('^');
            const int var = std::stoi(factor.substr(1, caret == std::string::npos ? std::string::npos : caret - 1));
            const int pw = caret == std::string::npos ? 1 : std::stoi(factor.substr(caret + 1));
            require(var >= 1 && var <= N, ErrorKind::Configuration, "basis variable out of range in '" + name + "'");
            e[var - 1] += pw;
            pos = end + 1;
        }
        return e;
    }

    std::vector<Exponents> terms_;
};

}  // namespace bscbf::sysid
