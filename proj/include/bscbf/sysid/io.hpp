#pragma once

// CSV persistence of drift and residual datasets, JSON persistence of fitted
// drift models. Metadata rides in leading "# key=value" lines.

#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bscbf/error.hpp"
#include "bscbf/sysid/diffusion.hpp"
#include "bscbf/sysid/drift.hpp"

namespace bscbf::sysid {

namespace detail {

inline std::vector<double> parse_row(const std::string& line, std::size_t expected, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(cell, &used));
        } catch (const std::exception&) {
            fail(ErrorKind::Io, what + ": bad number '" + cell + "'");
        }
    }
    require(out.size() == expected, ErrorKind::Io,
            what + ": expected " + std::to_string(expected) + " columns, got " + std::to_string(out.size()));
    return out;
}

/// Reads "# key=value" lines, the header and the numeric rows.
struct CsvBody {
    std::map<std::string, std::string> meta;
    std::string header;
    std::vector<std::string> rows;
};

inline CsvBody read_body(std::istream& is) {
    CsvBody b;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq != std::string::npos) b.meta[line.substr(2, eq - 2)] = line.substr(eq + 1);
            continue;
        }
        if (b.header.empty()) {
            b.header = line;
            continue;
        }
        b.rows.push_back(line);
    }
    return b;
}

inline const std::string& meta_at(const CsvBody& b, const std::string& key, const std::string& what) {
    const auto it = b.meta.find(key);
    if (it == b.meta.end()) fail(ErrorKind::Io, what + ": missing metadata '" + key + "'");
    return it->second;
}

inline std::string join_vec(const Eigen::VectorXd& v) {
    std::ostringstream os;
    os << std::setprecision(17);
    for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
    return os.str();
}

inline Eigen::VectorXd split_vec(const std::string& s) {
    std::stringstream ss(s);
    std::vector<double> v;
    std::string tok;
    while (ss >> tok) v.push_back(std::stod(tok));
    return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

template <int N, int P>
void write_csv(std::ostream& os, const DriftDataset<N, P>& ds) {
    os << std::setprecision(17);
    os << "# K=" << ds.K << "\n# dt=" << ds.dt << "\n# scheme=" << to_string(ds.scheme) << "\n# seed=" << ds.seed
       << "\n# u1=" << detail::join_vec(ds.u1) << "\n# u2=" << detail::join_vec(ds.u2)
       << "\n# target_var_f=" << detail::join_vec(ds.target_var_f)
       << "\n# target_var_g=" << detail::join_vec(ds.target_var_g) << "\n# hash=" << ds.hash() << '\n';
    for (int i = 1; i <= N; ++i) os << (i > 1 ? "," : "") << 'x' << i;
    for (int i = 1; i <= N; ++i) os << ",yf" << i;
    for (int i = 1; i <= N; ++i)
        for (int j = 1; j <= P; ++j) os << ",yg" << i << '_' << j;
    os << '\n';
    for (std::size_t k = 0; k < ds.size(); ++k) {
        const auto r = static_cast<Eigen::Index>(k);
        for (int i = 0; i < N; ++i) os << (i ? "," : "") << ds.X[k][i];
        for (int i = 0; i < N; ++i) os << ',' << ds.Yf(r, i);
        for (int i = 0; i < N * P; ++i) os << ',' << ds.Yg(r, i);
        os << '\n';
    }
}

template <int N, int P>
DriftDataset<N, P> read_drift_dataset(std::istream& is) {
    const std::string what = "drift dataset";
    const auto body = detail::read_body(is);
    require(!body.header.empty(), ErrorKind::Io, what + ": missing header");
    DriftDataset<N, P> ds;
    try {
        ds.K = std::stol(detail::meta_at(body, "K", what));
        ds.dt = std::stod(detail::meta_at(body, "dt", what));
        ds.scheme = detail::meta_at(body, "scheme", what) == "sequential" ? DriftScheme::sequential : DriftScheme::paired;
        ds.seed = std::stoull(detail::meta_at(body, "seed", what));
        const Eigen::VectorXd u1 = detail::split_vec(detail::meta_at(body, "u1", what));
        const Eigen::VectorXd u2 = detail::split_vec(detail::meta_at(body, "u2", what));
        require(u1.size() == P && u2.size() == P, ErrorKind::Io, what + ": control pair has wrong dimension");
        ds.u1 = u1;
        ds.u2 = u2;
        ds.target_var_f = detail::split_vec(detail::meta_at(body, "target_var_f", what));
        ds.target_var_g = detail::split_vec(detail::meta_at(body, "target_var_g", what));
        const auto n = static_cast<Eigen::Index>(body.rows.size());
        ds.Yf.resize(n, N);
        ds.Yg.resize(n, N * P);
        for (Eigen::Index r = 0; r < n; ++r) {
            const auto v = detail::parse_row(body.rows[r], 2 * N + N * P, what);
            Vec<N> x;
            for (int i = 0; i < N; ++i) x[i] = v[i];
            ds.X.push_back(x);
            for (int i = 0; i < N; ++i) ds.Yf(r, i) = v[N + i];
            for (int i = 0; i < N * P; ++i) ds.Yg(r, i) = v[2 * N + i];
        }
    } catch (const std::logic_error& e) {
        fail(ErrorKind::Io, what + ": malformed metadata (" + e.what() + ")");
    }
    const auto stored = body.meta.find("hash");
    if (stored != body.meta.end())
        require(stored->second == ds.hash(), ErrorKind::Io,
                what + ": content hash " + ds.hash() + " does not match recorded " + stored->second);
    return ds;
}

template <int N>
void write_csv(std::ostream& os, const ResidualDataset<N>& ds) {
    os << std::setprecision(17);
    os << "# dt=" << ds.dt << "\n# normalization=" << to_string(ds.normalization) << "\n# model_hash=" << ds.model_hash
       << "\n# rollouts=" << ds.rollouts << "\n# truncated_rollouts=" << ds.truncated_rollouts
       << "\n# steps_recorded=" << ds.steps_recorded << '\n';
    for (int i = 1; i <= N; ++i) os << (i > 1 ? "," : "") << "xi" << i;
    os << '\n';
    for (std::size_t k = 0; k < ds.xi[0].size(); ++k) {
        for (int i = 0; i < N; ++i) os << (i ? "," : "") << ds.xi[i][k];
        os << '\n';
    }
}

template <int N>
ResidualDataset<N> read_residual_dataset(std::istream& is) {
    const std::string what = "residual dataset";
    const auto body = detail::read_body(is);
    require(!body.header.empty(), ErrorKind::Io, what + ": missing header");
    ResidualDataset<N> ds;
    try {
        ds.dt = std::stod(detail::meta_at(body, "dt", what));
        ds.normalization = detail::meta_at(body, "normalization", what) == "raw" ? ResidualNormalization::raw
                                                                                 : ResidualNormalization::per_sqrt_dt;
        ds.model_hash = detail::meta_at(body, "model_hash", what);
        ds.rollouts = std::stol(detail::meta_at(body, "rollouts", what));
        ds.truncated_rollouts = std::stol(detail::meta_at(body, "truncated_rollouts", what));
        ds.steps_recorded = std::stol(detail::meta_at(body, "steps_recorded", what));
        for (const auto& row : body.rows) {
            const auto v = detail::parse_row(row, N, what);
            for (int i = 0; i < N; ++i) ds.xi[i].push_back(v[i]);
        }
    } catch (const std::logic_error& e) {
        fail(ErrorKind::Io, what + ": malformed metadata (" + e.what() + ")");
    }
    return ds;
}

template <int N>
nlohmann::json to_json(const BlrPosterior<N>& post) {
    const auto& f = post.fit;
    const auto m = f.mean.size();
    std::vector<double> cov(static_cast<std::size_t>(m * m)), prior(static_cast<std::size_t>(m * m));
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) {
            cov[static_cast<std::size_t>(i * m + j)] = f.cov(i, j);
            prior[static_cast<std::size_t>(i * m + j)] = f.prior_cov(i, j);
        }
    return {{"basis", post.basis.names()},
            {"mean", std::vector<double>(f.mean.data(), f.mean.data() + m)},
            {"cov", cov},
            {"prior_cov", prior},
            {"noise_var", f.noise_var},
            {"provenance", post.provenance}};
}

template <int N>
BlrPosterior<N> posterior_from_json(const nlohmann::json& j) {
    try {
            BlrPosterior<N> post;
            post.basis = Basis<N>::from_names(j.at("basis").get<std::vector<std::string>>());
            const auto mean = j.at("mean").get<std::vector<double>>();
            const auto cov = j.at("cov").get<std::vector<double>>();
            const auto prior = j.at("prior_cov").get<std::vector<double>>();
            const auto m = static_cast<Eigen::Index>(mean.size());
            require(m == post.basis.size() && cov.size() == mean.size() * mean.size() && prior.size() == cov.size(),
                    ErrorKind::Io, "fitted model: inconsistent sizes");
            post.fit.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), m);
            post.fit.cov = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                cov.data(), m, m);
            post.fit.prior_cov = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                prior.data(), m, m);
            post.fit.noise_var = j.at("noise_var").get<double>();
            post.provenance = j.at("provenance").get<std::string>();
            return post;
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::Io, std::string("fitted model: ") + e.what());
        }
    }

    template <int N, int P>
    nlohmann::json to_json(const LearnedDrift<N, P>& m) {
        nlohmann::json j{{"n", N}, {"p", P}, {"f", nlohmann::json::array()}, {"g", nlohmann::json::array()}};
        for (const auto& post : m.f) j["f"].push_back(to_json(post));
        for (const auto& post : m.g) j["g"].push_back(to_json(post));
        return j;
    }

    template <int N, int P>
    LearnedDrift<N, P> learned_drift_from_json(const nlohmann::json& j) {
        require(j.value("n", -1) == N && j.value("p", -1) == P, ErrorKind::Io, "fitted model: dimension mismatch");
        LearnedDrift<N, P> m;
        for (const auto& e : j.at("f")) m.f.push_back(posterior_from_json<N>(e));
        for (const auto& e : j.at("g")) m.g.push_back(posterior_from_json<N>(e));
        require(static_cast<int>(m.f.size()) == N && static_cast<int>(m.g.size()) == N * P, ErrorKind::Io,
                "fitted model: wrong number of channels");
        return m;
    }

    }  // namespace bscbf::sysid
