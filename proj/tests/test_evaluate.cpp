#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "acr/evaluate.hpp"
#include "acr/rng.hpp"
#include "test_support.hpp"

using namespace acr;
using acr::testing::rel_err;

namespace {

Sample labeled(std::size_t id, std::vector<double> features, std::size_t label) {
    return Sample{id, std::move(features), label, 0};
}

}  // namespace

TEST_CASE("accuracy matrix bookkeeping") {
    AccuracyMatrix m(3);
    m.set(0, 0, 0.9);
    m.set(1, 0, 0.7);
    CHECK(m.at(0, 0) == 0.9);
    CHECK(m.has(1, 0));
    CHECK_FALSE(m.has(2, 0));
    CHECK_THROWS_AS(m.at(2, 0), std::out_of_range);
    CHECK_THROWS_AS(m.set(0, 1, 0.5), std::out_of_range);  // upper triangle
    CHECK_THROWS_AS(m.set(3, 0, 0.5), std::out_of_range);
    CHECK_THROWS_AS(m.set(2, 0, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(AccuracyMatrix(0), std::invalid_argument);
}

TEST_CASE("average accuracy over the final row") {
    AccuracyMatrix m(2);
    m.set(0, 0, 0.9);
    m.set(1, 0, 0.6);
    m.set(1, 1, 0.8);
    CHECK(acc(m) == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(*bwt(m) == doctest::Approx(-0.3).epsilon(1e-15));

    SUBCASE("perfect scores") {
        AccuracyMatrix ones(3);
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j <= i; ++j) ones.set(i, j, 1.0);
        }
        CHECK(acc(ones) == 1.0);
        CHECK(*bwt(ones) == 0.0);
    }
    SUBCASE("no forgetting means zero transfer") {
        AccuracyMatrix flat(3);
        flat.set(0, 0, 0.8);
        flat.set(1, 1, 0.6);
        flat.set(2, 2, 0.7);
        flat.set(1, 0, 0.3);
        flat.set(2, 0, 0.8);
        flat.set(2, 1, 0.6);
        CHECK(*bwt(flat) == doctest::Approx(0.0).epsilon(1e-15));
    }
    SUBCASE("single task has no transfer metric") {
        AccuracyMatrix solo(1);
        solo.set(0, 0, 0.5);
        CHECK(acc(solo) == 0.5);
        CHECK_FALSE(bwt(solo).has_value());
    }
    SUBCASE("incomplete final row is refused") {
        AccuracyMatrix gap(2);
        gap.set(0, 0, 0.9);
        gap.set(1, 1, 0.8);
        CHECK_THROWS_AS(acc(gap), std::out_of_range);
    }
    SUBCASE("random matrix against the hand formula") {
        std::mt19937 rng(3);
        std::uniform_real_distribution<double> dist(0.0, 1.0);
        AccuracyMatrix r(4);
        double alpha[4][4];
        for (std::size_t i = 0; i < 4; ++i) {
            for (std::size_t j = 0; j <= i; ++j) {
                alpha[i][j] = dist(rng);
                r.set(i, j, alpha[i][j]);
            }
        }
        double acc_oracle =
                (alpha[3][0] + alpha[3][1] + alpha[3][2] + alpha[3][3]) / 4.0;
        double bwt_oracle = ((alpha[3][0] - alpha[0][0]) + (alpha[3][1] - alpha[1][1]) +
                             (alpha[3][2] - alpha[2][2])) /
                            3.0;
        CHECK(std::abs(acc(r) - acc_oracle) < 1e-15);
        CHECK(std::abs(*bwt(r) - bwt_oracle) < 1e-15);

        // coarse sanity bound
        double max_final = std::max({alpha[3][0], alpha[3][1], alpha[3][2]});
        double min_diag = std::min({alpha[0][0], alpha[1][1], alpha[2][2]});
        CHECK(*bwt(r) <= max_final - min_diag + 1e-15);
    }
}

TEST_CASE("task evaluation scores argmax over every proxy") {
    std::mt19937 rng(5);

    SUBCASE("all-zero model ties toward class 0 on a balanced set") {
        Mlp enc(2, {}, 2, rng);
        for (double& v : enc.weights()[0].values()) v = 0.0;
        ProxyClassifier clf(2);
        clf.ensure_classes({0, 1, 2, 3}, rng);
        std::vector<Sample> test;
        for (std::size_t i = 0; i < 40; ++i) {
            test.push_back(labeled(i, {1.0, -0.5}, i % 4));
        }
        CHECK(eval_task(enc, clf, test) == doctest::Approx(0.25));
    }
    SUBCASE("single correct sample scores one") {
        Mlp enc(2, {}, 2, rng);
        enc.weights()[0] = Tensor::from_values({2, 2}, {1, 0, 0, 1});
        ProxyClassifier clf(2);
        clf.set_proxies(Tensor::from_values({2, 2}, {1, 0, 0, 1}));
        std::vector<Sample> test{labeled(0, {1.0, 0.0}, 0)};
        CHECK(eval_task(enc, clf, test) == 1.0);
    }
    SUBCASE("random model lands at chance on average") {
        double total = 0.0;
        for (std::uint32_t seed = 0; seed < 10; ++seed) {
            std::mt19937 r = seeded_rng(seed, "eval-chance");
            Mlp enc(6, {8}, 4, r);
            ProxyClassifier clf(4);
            clf.ensure_classes({0, 1, 2, 3}, r);
            std::vector<Sample> test;
            std::normal_distribution<double> gauss(0.0, 1.0);
            for (std::size_t i = 0; i < 200; ++i) {
                std::vector<double> f(6);
                for (double& v : f) v = gauss(r);
                test.push_back(labeled(i, std::move(f), i % 4));
            }
            total += eval_task(enc, clf, test);
        }
        CHECK(std::abs(total / 10.0 - 0.25) < 0.03);  // 3 sigma of the mean
    }
    SUBCASE("unseen class is an error") {
        Mlp enc(2, {}, 2, rng);
        ProxyClassifier clf(2);
        clf.ensure_classes({0, 1}, rng);
        std::vector<Sample> test{labeled(0, {1.0, 0.0}, 7)};
        CHECK_THROWS_AS(eval_task(enc, clf, test), std::out_of_range);
    }
}

TEST_CASE("matrix averaging") {
    AccuracyMatrix a(2), b(2);
    a.set(0, 0, 0.4);
    a.set(1, 0, 0.2);
    a.set(1, 1, 0.6);
    b.set(0, 0, 0.8);
    b.set(1, 0, 0.4);
    b.set(1, 1, 1.0);

    SUBCASE("single matrix averages to itself") {
        AccuracyMatrix avg = average_matrices({a});
        CHECK(avg.at(0, 0) == 0.4);
        CHECK(avg.at(1, 1) == 0.6);
    }
    SUBCASE("two matrices average entrywise") {
        AccuracyMatrix avg = average_matrices({a, b});
        CHECK(avg.at(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
        CHECK(avg.at(1, 0) == doctest::Approx(0.3).epsilon(1e-15));
        CHECK(avg.at(1, 1) == doctest::Approx(0.8).epsilon(1e-15));
    }
    SUBCASE("disagreeing shapes are refused") {
        AccuracyMatrix c(3);
        c.set(0, 0, 0.5);
        CHECK_THROWS_AS(average_matrices({a, c}), std::invalid_argument);
        CHECK_THROWS_AS(average_matrices({}), std::invalid_argument);
    }
}

TEST_CASE("alpha csv layout") {
    AccuracyMatrix m(2);
    m.set(0, 0, 0.9);
    m.set(1, 0, 0.5);
    m.set(1, 1, 0.75);
    const std::string path = "alpha_test.csv";
    m.write_csv(path);
    std::ifstream in(path);
    std::string header, row0, row1;
    std::getline(in, header);
    std::getline(in, row0);
    std::getline(in, row1);
    std::remove(path.c_str());

    CHECK(header == "stage,task0,task1");
    CHECK(row0 == "0,0.900000,");
    CHECK(row1 == "1,0.500000,0.750000");
}

TEST_CASE("summary csv round trip") {
    std::vector<SummaryRow> rows;
    rows.push_back({"challenging", "0", 0.61, -0.12, 0.43, -0.2, 0.0, 0.0});
    rows.push_back({"challenging", "mean", 0.61, -0.12, 0.43, -0.2, 0.0, 0.0});

    const std::string path = "summary_test.csv";
    write_summary_csv(path, rows);

    std::ifstream in(path);
    std::string header, row0;
    std::getline(in, header);
    std::getline(in, row0);
    CHECK(header == "policy,seed,ACC_iid,BWT_iid,ACC_ood,BWT_ood,CV_tasks,CV_classes");
    CHECK(row0 ==
          "challenging,0,0.610000,-0.120000,0.430000,-0.200000,0.000000,0.000000");

    std::vector<SummaryRow> loaded = read_summary_csv(path);
    std::remove(path.c_str());
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].policy == "challenging");
    CHECK(loaded[1].seed == "mean");
    CHECK(loaded[0].acc_iid == doctest::Approx(0.61));
    CHECK(loaded[0].bwt_ood == doctest::Approx(-0.2));
}
