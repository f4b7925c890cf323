#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "sfxb/dataset.hpp"
#include "sfxb/errors.hpp"
#include "test_util.hpp"

using namespace sfxb;
using namespace testutil;

namespace {

DataMatrix make_matrix(std::size_t rows, std::size_t cols, unsigned seed,
                       bool with_label = true) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> dist(-10.0, 10.0);
    DataMatrix m;
    m.n_rows = rows;
    for (std::size_t c = 0; c < cols; ++c) {
        Column col;
        col.name = "f" + std::to_string(c);
        for (std::size_t r = 0; r < rows; ++r) col.values.push_back(dist(rng));
        m.features.push_back(std::move(col));
    }
    if (with_label) {
        std::vector<std::uint8_t> y(rows);
        for (auto &v : y) v = rng() & 1;
        m.label = std::move(y);
        m.label_name = "y";
    }
    m.row_ids.resize(rows);
    std::iota(m.row_ids.begin(), m.row_ids.end(), 0u);
    m.validate();
    return m;
}

} // namespace

TEST_CASE("load_csv parses a small labeled file") {
    TempDir dir;
    std::string path = write_file(dir, "toy.csv",
                                  "a,b,y\n"
                                  "1.5,2.0,0\n"
                                  "-3.25,4.5,1\n"
                                  "0.0,1e3,0\n");
    DataMatrix m = load_csv(path, "y");
    CHECK(m.n_rows == 3);
    CHECK(m.n_features() == 2);
    CHECK(m.features[0].name == "a");
    CHECK(m.features[1].values[1] == doctest::Approx(4.5));
    CHECK(m.features[1].values[2] == doctest::Approx(1000.0));
    REQUIRE(m.label.has_value());
    CHECK((*m.label)[1] == 1);
    CHECK(m.row_ids == std::vector<std::uint32_t>{0, 1, 2});
}

TEST_CASE("load_csv rejects bad input") {
    TempDir dir;
    SUBCASE("nan cell") {
        std::string p = write_file(dir, "bad.csv", "a,y\nnan,0\n");
        CHECK_THROWS_CONTAINING(load_csv(p, "y"), "non-finite value at row 0, column a");
    }
    SUBCASE("non-numeric cell") {
        std::string p = write_file(dir, "bad.csv", "a,y\nhello,0\n");
        CHECK_THROWS_CONTAINING(load_csv(p, "y"), "non-numeric cell");
    }
    SUBCASE("unknown label column") {
        std::string p = write_file(dir, "bad.csv", "a,b\n1,2\n");
        CHECK_THROWS_CONTAINING(load_csv(p, "y"), "unknown label column 'y'");
    }
    SUBCASE("label outside {0,1}") {
        std::string p = write_file(dir, "bad.csv", "a,y\n1,2\n");
        CHECK_THROWS_CONTAINING(load_csv(p, "y"), "label value");
    }
    SUBCASE("ragged row") {
        std::string p = write_file(dir, "bad.csv", "a,b,y\n1,2,0\n1,2\n");
        CHECK_THROWS_CONTAINING(load_csv(p, "y"), "row 1");
    }
    SUBCASE("missing file") {
        CHECK_THROWS_CONTAINING(load_csv(dir.file("absent.csv"), "y"), "cannot open");
    }
}

TEST_CASE("load_csv handles a 28-feature table") {
    TempDir dir;
    std::ostringstream os;
    for (int c = 0; c < 28; ++c) os << "V" << c + 1 << ",";
    os << "Class\n";
    for (int r = 0; r < 5; ++r) {
        for (int c = 0; c < 28; ++c) os << (r * 28 + c) * 0.5 << ",";
        os << r % 2 << "\n";
    }
    DataMatrix m = load_csv(write_file(dir, "wide.csv", os.str()), "Class");
    CHECK(m.n_features() == 28);
    CHECK(m.n_rows == 5);
}

TEST_CASE("split_vertical partitions columns and keeps label on the active party") {
    DataMatrix m = make_matrix(40, 28, 7);
    std::map<int, std::set<std::string>> assign;
    for (int c = 0; c < 10; ++c) assign[0].insert("f" + std::to_string(c));
    for (int c = 10; c < 28; ++c) assign[1].insert("f" + std::to_string(c));
    std::vector<PartyShard> shards = split_vertical(m, assign, 1);
    REQUIRE(shards.size() == 2);
    CHECK(shards[0].role == PartyRole::passive);
    CHECK(shards[1].role == PartyRole::active);
    CHECK(shards[0].data.n_features() == 10);
    CHECK(shards[1].data.n_features() == 18);
    CHECK_FALSE(shards[0].data.label.has_value());
    REQUIRE(shards[1].data.label.has_value());
    CHECK(*shards[1].data.label == *m.label);
    CHECK(shards[0].data.row_ids == m.row_ids);
    CHECK(shards[1].data.row_ids == m.row_ids);

    // Reconstruction: placing every shard column at its global position
    // rebuilds the original matrix.
    std::vector<const Column *> rebuilt(m.n_features(), nullptr);
    for (const PartyShard &s : shards)
        for (std::size_t i = 0; i < s.owned_feature_globals.size(); ++i)
            rebuilt[static_cast<std::size_t>(s.owned_feature_globals[i])] = &s.data.features[i];
    for (std::size_t c = 0; c < m.n_features(); ++c) {
        REQUIRE(rebuilt[c] != nullptr);
        CHECK(rebuilt[c]->name == m.features[c].name);
        CHECK(rebuilt[c]->values == m.features[c].values);
    }
}

TEST_CASE("split_vertical validates the assignment") {
    DataMatrix m = make_matrix(10, 4, 3);
    std::map<int, std::set<std::string>> assign;
    assign[0] = {"f0", "f1"};
    assign[1] = {"f2"};
    CHECK_THROWS_CONTAINING(split_vertical(m, assign, 0), "not assigned");
    assign[1] = {"f1", "f2", "f3"};
    CHECK_THROWS_CONTAINING(split_vertical(m, assign, 0), "multiple parties");
    assign[1] = {"f2", "f3"};
    CHECK_THROWS_CONTAINING(split_vertical(m, assign, 9), "active party");
    std::vector<PartyShard> ok = split_vertical(m, assign, 0);
    CHECK(ok[0].role == PartyRole::active);
}

TEST_CASE("split_vertical with a single party is the identity partition") {
    DataMatrix m = make_matrix(12, 5, 11);
    std::map<int, std::set<std::string>> assign;
    for (const Column &c : m.features) assign[0].insert(c.name);
    std::vector<PartyShard> shards = split_vertical(m, assign, 0);
    REQUIRE(shards.size() == 1);
    CHECK(shards[0].data.n_features() == m.n_features());
    for (std::size_t c = 0; c < m.n_features(); ++c)
        CHECK(shards[0].data.features[c].values == m.features[c].values);
}

TEST_CASE("split_horizontal block sizes follow the remainder-to-last rule") {
    SUBCASE("even 6/3") {
        std::vector<PartyShard> s = split_horizontal(make_matrix(6, 2, 1), 3);
        REQUIRE(s.size() == 3);
        CHECK(s[0].data.n_rows == 2);
        CHECK(s[1].data.n_rows == 2);
        CHECK(s[2].data.n_rows == 2);
    }
    SUBCASE("remainder 7/3") {
        std::vector<PartyShard> s = split_horizontal(make_matrix(7, 2, 2), 3);
        CHECK(s[0].data.n_rows == 2);
        CHECK(s[1].data.n_rows == 2);
        CHECK(s[2].data.n_rows == 3);
    }
    SUBCASE("227845 rows over 3 parties") {
        DataMatrix m;
        m.n_rows = 227845;
        Column col;
        col.name = "f0";
        col.values.resize(m.n_rows);
        std::iota(col.values.begin(), col.values.end(), 0.0);
        m.features.push_back(std::move(col));
        m.label = std::vector<std::uint8_t>(m.n_rows, 0);
        m.label_name = "y";
        m.row_ids.resize(m.n_rows);
        std::iota(m.row_ids.begin(), m.row_ids.end(), 0u);
        std::vector<PartyShard> s = split_horizontal(m, 3);
        CHECK(s[0].data.n_rows == 75948);
        CHECK(s[1].data.n_rows == 75948);
        CHECK(s[2].data.n_rows == 75949);
    }
}

TEST_CASE("split_horizontal reconstructs the original rows and keeps ids disjoint") {
    DataMatrix m = make_matrix(23, 3, 5);
    std::vector<PartyShard> shards = split_horizontal(m, 4);
    std::vector<double> joined;
    std::vector<std::uint32_t> ids;
    std::vector<std::uint8_t> labels;
    for (const PartyShard &s : shards) {
        CHECK(s.role == PartyRole::peer);
        CHECK(s.data.n_features() == 3);
        REQUIRE(s.data.label.has_value());
        joined.insert(joined.end(), s.data.features[1].values.begin(),
                      s.data.features[1].values.end());
        ids.insert(ids.end(), s.data.row_ids.begin(), s.data.row_ids.end());
        labels.insert(labels.end(), s.data.label->begin(), s.data.label->end());
    }
    CHECK(joined == m.features[1].values);
    CHECK(ids == m.row_ids);
    CHECK(labels == *m.label);
    CHECK_THROWS_CONTAINING(split_horizontal(make_matrix(3, 1, 1), 5), "n_parties");
}

TEST_CASE("compute_cuts matches hand-derived values") {
    SUBCASE("two duplicated values, two bins") {
        CHECK(compute_cuts({1, 1, 2, 2}, 2) == std::vector<double>{1.5});
    }
    SUBCASE("constant column has no cuts") {
        CHECK(compute_cuts(std::vector<double>(50, 3.25), 256).empty());
    }
    SUBCASE("1..1000 at 256 bins gives 255 cuts") {
        std::vector<double> v(1000);
        std::iota(v.begin(), v.end(), 1.0);
        std::vector<double> cuts = compute_cuts(v, 256);
        CHECK(cuts.size() == 255);
        CHECK(std::is_sorted(cuts.begin(), cuts.end()));
        CHECK(std::adjacent_find(cuts.begin(), cuts.end()) == cuts.end());
    }
    SUBCASE("empty column rejected") {
        CHECK_THROWS_CONTAINING(compute_cuts({}, 4), "empty column");
    }
}

TEST_CASE("compute_cuts properties on random data") {
    std::mt19937 rng(99);
    for (int rep = 0; rep < 20; ++rep) {
        std::size_t n = 1 + rng() % 400;
        int max_bin = 2 + static_cast<int>(rng() % 40);
        std::uniform_real_distribution<double> dist(-5.0, 5.0);
        std::vector<double> v(n);
        for (double &x : v) x = dist(rng);
        if (rep % 3 == 0)
            for (double &x : v) x = std::round(x); // force heavy duplication
        std::vector<double> cuts = compute_cuts(v, max_bin);
        std::vector<double> uniq = v;
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        CHECK(cuts.size() <= static_cast<std::size_t>(max_bin - 1));
        CHECK(cuts.size() <= uniq.size() - 1);
        CHECK(std::is_sorted(cuts.begin(), cuts.end()));
        CHECK(std::adjacent_find(cuts.begin(), cuts.end()) == cuts.end());
        // determinism
        CHECK(compute_cuts(v, max_bin) == cuts);
        // every bin index stays inside [0, max_bin)
        std::vector<std::uint16_t> bins = bin_column(v, cuts);
        for (std::uint16_t b : bins) CHECK(b < max_bin);
    }
}

TEST_CASE("merge_cut_candidates unions, dedupes, and thins deterministically") {
    SUBCASE("identical lists unchanged") {
        std::vector<double> a{0.5, 1.5, 9.0};
        CHECK(merge_cut_candidates({a, a}, 256) == a);
    }
    SUBCASE("small disjoint union under the cap") {
        CHECK(merge_cut_candidates({{1.5}, {2.5}}, 256) == std::vector<double>{1.5, 2.5});
    }
    SUBCASE("400 candidates thinned to 255") {
        std::vector<double> a, b;
        for (int i = 0; i < 400; ++i) (i % 2 ? a : b).push_back(i * 0.25);
        std::vector<double> merged = merge_cut_candidates({a, b}, 256);
        CHECK(merged.size() == 255);
        CHECK(std::is_sorted(merged.begin(), merged.end()));
        // kept values must come from the union
        for (double v : merged) CHECK(std::fmod(v, 0.25) == 0.0);
        // evenly strided: gaps differ by at most one source step
        std::vector<std::size_t> gaps;
        for (std::size_t i = 1; i < merged.size(); ++i)
            gaps.push_back(static_cast<std::size_t>((merged[i] - merged[i - 1]) / 0.25));
        std::size_t lo = *std::min_element(gaps.begin(), gaps.end());
        std::size_t hi = *std::max_element(gaps.begin(), gaps.end());
        CHECK(lo >= 1);
        CHECK(hi <= 2);
    }
    SUBCASE("idempotent at the cap") {
        std::vector<double> big;
        for (int i = 0; i < 600; ++i) big.push_back(i * 1.0);
        std::vector<double> once = merge_cut_candidates({big}, 128);
        CHECK(once.size() == 127);
        CHECK(merge_cut_candidates({once}, 128) == once);
    }
}

TEST_CASE("bin_column counts thresholds at or below the value") {
    std::vector<double> cuts{1.5};
    CHECK(bin_column({1.0}, cuts)[0] == 0);
    CHECK(bin_column({1.5}, cuts)[0] == 1);
    CHECK(bin_column({9.9}, {1.5, 3.0, 7.2})[0] == 3);
    CHECK(bin_column({0.0, 2.0, 3.0, 8.0}, {1.5, 3.0, 7.2}) ==
          std::vector<std::uint16_t>{0, 1, 2, 3});
}

TEST_CASE("binning is monotone") {
    std::mt19937 rng(123);
    std::uniform_real_distribution<double> dist(-50.0, 50.0);
    std::vector<double> v(300);
    for (double &x : v) x = dist(rng);
    std::vector<double> cuts = compute_cuts(v, 16);
    std::vector<double> sorted_v = v;
    std::sort(sorted_v.begin(), sorted_v.end());
    std::vector<std::uint16_t> bins = bin_column(sorted_v, cuts);
    CHECK(std::is_sorted(bins.begin(), bins.end()));
}

TEST_CASE("vertical per-owner cuts equal centralized cuts over the same column") {
    DataMatrix m = make_matrix(200, 6, 42);
    std::map<int, std::set<std::string>> assign;
    assign[0] = {"f0", "f2", "f4"};
    assign[1] = {"f1", "f3", "f5"};
    std::vector<PartyShard> shards = split_vertical(m, assign, 0);
    for (const PartyShard &s : shards)
        for (std::size_t i = 0; i < s.data.n_features(); ++i) {
            int g = s.owned_feature_globals[i];
            CHECK(compute_cuts(s.data.features[i].values, 64) ==
                  compute_cuts(m.features[static_cast<std::size_t>(g)].values, 64));
        }
}
