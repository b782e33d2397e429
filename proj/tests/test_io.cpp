#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "bscbf/benchmarks.hpp"
#include "bscbf/controller.hpp"
#include "bscbf/sysid/io.hpp"

using namespace bscbf;
using namespace bscbf::sysid;

namespace {

DriftDataset<2, 1> small_dataset() {
    const auto pb = benchmark_problem("example1", Vec<2>(0.2, 0.2));
    const Blackbox<2, 1, 2> box(pb.model);
    const auto probes = uniform_points<2>(pb.probe_lo, pb.probe_hi, 5, 1);
    return collect_drift_data(box, probes, Vec<1>(0.0), Vec<1>(1.0), 4, 0.01, 2);
}

std::string csv_of(const DriftDataset<2, 1>& ds) {
    std::ostringstream os;
    write_csv(os, ds);
    return os.str();
}

void expect_io_error(const std::function<void()>& f, const std::string& needle = "") {
    try {
        f();
        ADD_FAILURE() << "no error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Io) << e.what();
        if (!needle.empty()) EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
}

std::string replace_first(std::string s, const std::string& from, const std::string& to) {
    const auto at = s.find(from);
    EXPECT_NE(at, std::string::npos) << from;
    if (at != std::string::npos) s.replace(at, from.size(), to);
    return s;
}

}  // namespace

TEST(DriftCsv, HeaderNamesEveryColumn) {
    std::istringstream is(csv_of(small_dataset()));
    std::string line, header;
    while (std::getline(is, line))
        if (line[0] != '#') {
            header = line;
            break;
        }
    EXPECT_EQ(header, "x1,x2,yf1,yf2,yg1_1,yg2_1");
}

TEST(DriftCsv, RoundTripKeepsEveryBit) {
    const auto ds = small_dataset();
    std::istringstream is(csv_of(ds));
    const auto back = read_drift_dataset<2, 1>(is);
    EXPECT_EQ(back.hash(), ds.hash());
    EXPECT_EQ(back.K, 4);
    EXPECT_EQ(back.Yg, ds.Yg);
    EXPECT_EQ(back.target_var_f, ds.target_var_f);
}

TEST(DriftCsv, EditedRowsFailTheHashCheck) {
    const auto text = csv_of(small_dataset());
    // Change the last digit of the final number in the file.
    std::string edited = text;
    const auto pos = edited.find_last_of("0123456789");
    edited[pos] = edited[pos] == '1' ? '2' : '1';
    std::istringstream is(edited);
    expect_io_error([&] { read_drift_dataset<2, 1>(is); }, "hash");
}

TEST(DriftCsv, MalformedInputsAreIoErrors) {
    const auto text = csv_of(small_dataset());
    expect_io_error([&] {
        std::istringstream is(replace_first(text, "# K=4", "# K=four"));
        read_drift_dataset<2, 1>(is);
    }, "malformed");
    expect_io_error([&] {
        std::istringstream is(replace_first(text, "# dt=", "# dT="));
        read_drift_dataset<2, 1>(is);
    }, "dt");
    expect_io_error([&] {
        std::istringstream is(replace_first(text, "# u1=0", "# u1=0 0"));
        read_drift_dataset<2, 1>(is);
    }, "dimension");
    expect_io_error([&] {
        std::istringstream is(text + "0.1,0.2,0.3\n");
        read_drift_dataset<2, 1>(is);
    }, "columns");
    expect_io_error([&] {
        std::istringstream is(text + "0.1,0.2,abc,0.4,0.5,0.6\n");
        read_drift_dataset<2, 1>(is);
    }, "bad number");
    expect_io_error([&] {
        std::istringstream is("# K=1\n");
        read_drift_dataset<2, 1>(is);
    }, "header");
}

TEST(ResidualCsv, WrongWidthIsIoError) {
    ResidualDataset<2> ds;
    ds.dt = 0.01;
    ds.xi[0] = {0.1, 0.2};
    ds.xi[1] = {0.3, 0.4};
    std::ostringstream os;
    write_csv(os, ds);
    std::istringstream ok(os.str());
    EXPECT_EQ(read_residual_dataset<2>(ok).xi[1][1], 0.4);
    std::istringstream bad(os.str() + "1,2,3\n");
    expect_io_error([&] { read_residual_dataset<2>(bad); }, "columns");
}

TEST(ModelJson, CovarianceIsRowMajorAndNamesAreReadable) {
    BlrPosterior<2> post;
    post.basis = Basis<2>::cubic2();
    post.fit.mean = Eigen::VectorXd::LinSpaced(8, 0.0, 7.0);
    post.fit.cov = Eigen::MatrixXd::Zero(8, 8);
    post.fit.cov(0, 1) = 1.0;
    post.fit.cov(1, 0) = 2.0;
    post.fit.prior_cov = Eigen::MatrixXd::Identity(8, 8);
    post.fit.noise_var = 0.25;
    post.provenance = "abc";
    const auto j = to_json(post);
    EXPECT_EQ(j["cov"][1], 1.0);
    EXPECT_EQ(j["cov"][8], 2.0);
    EXPECT_EQ(j["basis"][5], "x1*x2");
    EXPECT_EQ(j["basis"][7], "x2^3");
    const auto back = posterior_from_json<2>(j);
    EXPECT_EQ(back.fit.cov, post.fit.cov);
    EXPECT_EQ(back.basis.names(), post.basis.names());
    EXPECT_EQ(back.fit.noise_var, 0.25);
}

TEST(ModelJson, InconsistentDocumentsAreIoErrors) {
    BlrPosterior<2> post;
    post.basis = Basis<2>::cubic2();
    post.fit.mean = Eigen::VectorXd::Zero(8);
    post.fit.cov = Eigen::MatrixXd::Identity(8, 8);
    post.fit.prior_cov = Eigen::MatrixXd::Identity(8, 8);
    auto j = to_json(post);

    auto missing = j;
    missing.erase("noise_var");
    expect_io_error([&] { posterior_from_json<2>(missing); });

    auto short_cov = j;
    short_cov["cov"].erase(0);
    expect_io_error([&] { posterior_from_json<2>(short_cov); }, "sizes");

    LearnedDrift<2, 1> m;
    m.f = {post, post};
    m.g = {post, post};
    auto doc = to_json(m);
    doc["p"] = 2;
    expect_io_error([&] { learned_drift_from_json<2, 1>(doc); }, "dimension");
    doc["p"] = 1;
    doc["g"].erase(1);
    expect_io_error([&] { learned_drift_from_json<2, 1>(doc); }, "channels");
}

TEST(TrajectoryCsv, RowCountAndTrailingControl) {
    const auto pb = benchmark_problem("example1", Vec<2>(0.2, 0.2));
    const auto traj = simulate(pb.model, Vec<2>(0.1, 0.1), [](const Vec<2>&) { return Vec<1>(0.5); }, 0.01, 3, 4);
    std::ostringstream os;
    write_csv(os, traj);
    std::istringstream is(os.str());
    std::string line;
    std::vector<std::string> rows;
    while (std::getline(is, line)) rows.push_back(line);
    ASSERT_EQ(rows.size(), 5u);  // header + 4 states
    EXPECT_EQ(rows[0], "t,x1,x2,u1");
    EXPECT_EQ(rows[1].substr(rows[1].rfind(',') + 1), "0.5");
    EXPECT_EQ(rows[4].back(), ',');  // the last state has no control yet
}
