#include <catch_amalgamated.hpp>

#include <random>

#include "lmmci/data.hpp"
#include "lmmci/error.hpp"
#include "lmmci/estimation.hpp"
#include "lmmci/formula.hpp"
#include "lmmci/random.hpp"

using namespace lmmci;

namespace {

const ModelFormula kMedsim = parse_formula("pos ~ treat * time + (time | id)");

}  // namespace

TEST_CASE("design matrices follow the formula") {
    const std::string csv =
        "id,time,pos,treat\n"
        "b,0,10,1\n"
        "a,0,5,0\n"
        "b,3,12,1\n"
        "a,3,7,0\n"
        "a,6,9,0\n";
    const auto d = read_csv_text(csv, kMedsim);
    REQUIRE(d.n() == 2);
    CHECK(d.total_rows() == 5);
    CHECK(d.clusters[0].id == "b");
    CHECK(d.clusters[1].id == "a");
    CHECK(d.fixed_names == std::vector<std::string>{"(Intercept)", "treat", "time", "treat:time"});
    CHECK(d.random_names == std::vector<std::string>{"(Intercept)", "time"});
    Eigen::MatrixXd xb(2, 4);
    xb << 1, 1, 0, 0, 1, 1, 3, 3;
    CHECK(d.clusters[0].X == xb);
    Eigen::MatrixXd za(3, 2);
    za << 1, 0, 1, 3, 1, 6;
    CHECK(d.clusters[1].Z == za);
    CHECK(d.clusters[1].y == Eigen::Vector3d(5, 7, 9));
    CHECK(d.clusters[1].row_ids == std::vector<std::size_t>{1, 3, 4});
}

TEST_CASE("missing values drop rows and quoted fields are read") {
    const std::string csv =
        "g,y,x\n"
        "\"a,1\",1.5,2\n"
        "\"a,1\",NA,3\n"
        "b,2.5,\n"
        "b,3.5,4\n"
        "c,1,1\n";
    const auto d = read_csv_text(csv, parse_formula("y ~ x + (1|g)"));
    CHECK(d.dropped_rows == 2);
    CHECK(d.n() == 3);
    CHECK(d.clusters[0].id == "a,1");
    CHECK(d.total_rows() == 3);
}

TEST_CASE("csv errors") {
    const auto f = parse_formula("y ~ x + (1|g)");
    CHECK_THROWS_AS(read_csv_text("g,y\na,1\nb,2\n", f), DataError);
    CHECK_THROWS_AS(read_csv_text("g,y,x\na,1,1\nb,2\n", f), DataError);
    CHECK_THROWS_AS(read_csv_text("g,y,x\na,1,1\n", f), DataError);
    CHECK_THROWS_AS(read_csv_text("g,y,x\na,1,1\nb,NA,2\n", f), DataError);
    CHECK_THROWS_AS(read_csv_text("", f), DataError);
    CHECK(read_csv_text("g,y,x\na,1,1\nb,2,inf\nb,2,2\n", f).dropped_rows == 1);
    CHECK_THROWS_AS(read_csv("/nonexistent/file.csv", f), DataError);
}

TEST_CASE("csv round trip is exact", "[property]") {
    std::mt19937_64 gen(31);
    std::normal_distribution<double> z;
    std::uniform_int_distribution<int> clusters(2, 8), rows(1, 6);
    const std::vector<std::string> labels{"1", "a b", "x,y", "q\"uote", "Z", "long-label_7", "0.5", "-3"};
    const auto f = parse_formula("resp ~ u * v + w + (1 + v | grp)");
    for (int i = 0; i < 1000; ++i) {
        std::vector<std::string> ids(labels);
        std::shuffle(ids.begin(), ids.end(), gen);
        ids.resize(static_cast<std::size_t>(clusters(gen)));
        std::vector<Eigen::VectorXd> ys;
        std::vector<Eigen::MatrixXd> covs;
        for (std::size_t c = 0; c < ids.size(); ++c) {
            const int J = rows(gen);
            Eigen::VectorXd y(J);
            Eigen::MatrixXd cov(J, 3);
            for (int j = 0; j < J; ++j) {
                y(j) = z(gen) * std::pow(10.0, std::uniform_int_distribution<int>(-8, 8)(gen));
                for (int k = 0; k < 3; ++k) cov(j, k) = z(gen) / 3.0;
            }
            ys.push_back(y);
            covs.push_back(cov);
        }
        const auto d = make_dataset(f, ids, ys, covs);
        const std::string text = write_csv_text(d);
        const auto back = read_csv_text(text, f);
        REQUIRE(back.n() == d.n());
        for (std::size_t c = 0; c < d.n(); ++c) {
            CHECK(back.clusters[c].id == d.clusters[c].id);
            CHECK(back.clusters[c].y == d.clusters[c].y);
            CHECK(back.clusters[c].X == d.clusters[c].X);
            CHECK(back.clusters[c].Z == d.clusters[c].Z);
        }
        CHECK(write_csv_text(back) == text);
    }
}

TEST_CASE("medsim simulation has 420 rows and is reproducible") {
    const auto design = medsim_design();
    RandomStream r1(17, 0), r2(17, 0), r3(18, 0);
    const auto a = simulate_dataset(design, r1);
    const auto b = simulate_dataset(design, r2);
    const auto c = simulate_dataset(design, r3);
    CHECK(a.total_rows() == 420);
    CHECK(a.n() == 60);
    CHECK(write_csv_text(a) == write_csv_text(b));
    CHECK(write_csv_text(a) != write_csv_text(c));
    int treated = 0;
    for (const auto& cl : a.clusters) treated += cl.X(0, 1) > 0.5 ? 1 : 0;
    CHECK(treated == 30);
    CHECK(a.clusters.front().X(0, 1) == 0.0);
    CHECK(a.clusters.back().X(0, 1) == 1.0);
}

TEST_CASE("two clusters with one time point") {
    SimulationDesign d = medsim_design();
    d.n = 2;
    d.times = {0.0};
    d.treat = treatment_split(2, 0.5);
    RandomStream rng(1, 0);
    const auto data = simulate_dataset(d, rng);
    CHECK(data.total_rows() == 2);
    CHECK(d.treat == std::vector<int>{0, 1});
}

TEST_CASE("zero variance simulation returns the mean structure") {
    SimulationDesign d = medsim_design();
    d.truth.sigma.setZero();
    d.truth.sigma_e = 0.0;
    RandomStream rng(1, 0);
    const auto data = simulate_dataset(d, rng);
    for (const auto& c : data.clusters) CHECK((c.y - c.X * d.truth.gamma).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("simulated moments match the truth") {
    SimulationDesign d = medsim_design();
    d.n = 4000;
    d.treat = treatment_split(d.n, 0.5);
    RandomStream rng(99, 0);
    const auto data = simulate_dataset(d, rng);
    // Residuals around the true mean at time 0 estimate var(b0) + sigma_e^2.
    double s = 0.0, s2 = 0.0;
    for (const auto& c : data.clusters) {
        const double r = c.y(0) - c.X.row(0).dot(d.truth.gamma);
        s += r;
        s2 += r * r;
    }
    const double n = static_cast<double>(data.n());
    CHECK(std::abs(s / n) < 4.0 * std::sqrt(3341.47 / n));
    CHECK(std::abs(s2 / n / 3341.47 - 1.0) < 0.08);
}

TEST_CASE("label swap relabels the steepest treated clusters") {
    RandomStream rng(4, 0);
    auto data = simulate_dataset(medsim_design(), rng);
    const auto original = data;
    const auto swapped = swap_treatment_labels(data, 2);
    REQUIRE(swapped.size() == 2);
    for (auto i : swapped) {
        CHECK(original.clusters[i].X(0, 1) == 1.0);
        CHECK(data.clusters[i].X(0, 1) == 0.0);
        CHECK(data.clusters[i].X.col(3).isZero());
        CHECK(data.clusters[i].y == original.clusters[i].y);
    }
}
