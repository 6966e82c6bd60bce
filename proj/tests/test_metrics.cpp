#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "cycle/error.hpp"
#include "cycle/metrics.hpp"

using namespace cycle;

namespace {

using Columns = std::map<std::string, std::vector<double>>;

// partition -> column -> values, from a csv whose first two columns are keys.
std::map<std::string, Columns> read_table(const std::string& name, std::map<std::string, Columns>* keyed = nullptr) {
    std::ifstream in(std::string(CYCLE_FIXTURE_DIR) + "/" + name);
    REQUIRE(in.good());
    std::string line;
    std::getline(in, line);
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    std::map<std::string, Columns> out;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::vector<std::string> cells;
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        for (std::size_t c = 2; c < cells.size(); ++c) {
            out[cells[0]][header[c]].push_back(std::stod(cells[c]));
            if (keyed) (*keyed)[cells[0] + "/" + cells[1]][header[c]].push_back(std::stod(cells[c]));
        }
    }
    return out;
}

}  // namespace

TEST_CASE("gain record") {
    const std::vector<double> b{80.0, 70.0};
    const std::vector<double> a{82.5, 69.0};
    const GainRecord r = gain_record(b, a);
    CHECK(r.gains == std::vector<double>{2.5, -1.0});
    CHECK_THROWS_AS(gain_record(b, std::vector<double>{1.0}), ParameterError);
}

TEST_CASE("summarize conventions") {
    const std::vector<double> b{0.0, 0.0, 0.0, 0.0};
    const std::vector<double> a{1.0, 2.0, 3.0, 4.0};
    const GainRecord r = gain_record(b, a);
    const FairnessSummary s = summarize(r);
    CHECK(s.mva == 2.5);
    CHECK(s.mcg == 2.5);
    CHECK(*s.cgs == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(*summarize(r, SpreadConvention::Population).cgs == doctest::Approx(std::sqrt(5.0 / 4.0)));
    CHECK_FALSE(s.pearson_cf.has_value());

    const GainRecord single = gain_record(std::vector<double>{50.0}, std::vector<double>{60.0});
    CHECK_FALSE(summarize(single).cgs.has_value());
    CHECK(*summarize(single, SpreadConvention::Population).cgs == 0.0);
    CHECK_THROWS(summarize(GainRecord{}));
}

TEST_CASE("equal gains have zero spread") {
    const GainRecord r = gain_record(std::vector<double>{10, 20, 30}, std::vector<double>{13, 23, 33});
    CHECK(*summarize(r).cgs == 0.0);
    CHECK(*summarize(r).pearson_cf == doctest::Approx(1.0));
}

TEST_CASE("pearson") {
    const std::vector<double> x{1, 2, 3, 4, 5};
    const std::vector<double> y{2, 4, 6, 8, 10};
    const std::vector<double> z{5, 4, 3, 2, 1};
    CHECK(*pearson_cf(x, y) == doctest::Approx(1.0));
    CHECK(*pearson_cf(x, z) == doctest::Approx(-1.0));
    CHECK_FALSE(pearson_cf(x, std::vector<double>{3, 3, 3, 3, 3}).has_value());
    CHECK_FALSE(pearson_cf(std::vector<double>{1}, std::vector<double>{2}).has_value());
    CHECK_THROWS(pearson_cf(x, std::vector<double>{1, 2}));
}

TEST_CASE("chebyshev bound") {
    CHECK(chebyshev_negative_gain_bound(2.0, 0.0) == 0.0);
    CHECK(chebyshev_negative_gain_bound(1.0, 1.0) == doctest::Approx(0.5));
    CHECK(chebyshev_negative_gain_bound(2.84, 0.408) == doctest::Approx(0.408 * 0.408 / (0.408 * 0.408 + 2.84 * 2.84)));
    // larger spread at equal mean weakens the guarantee
    CHECK(chebyshev_negative_gain_bound(2.0, 3.0) > chebyshev_negative_gain_bound(2.0, 1.0));
    CHECK_THROWS_AS(chebyshev_negative_gain_bound(0.0, 1.0), ParameterError);
    CHECK_THROWS_AS(chebyshev_negative_gain_bound(1.0, -1.0), ParameterError);
}

TEST_CASE("per-participant table reproduces every printed MVA and MCG") {
    std::map<std::string, Columns> printed;
    const auto table = read_table("cifar10_per_participant.csv");
    read_table("cifar10_printed_summary.csv", &printed);
    REQUIRE(table.size() == 5);
    for (const auto& [partition, cols] : table) {
        CAPTURE(partition);
        const auto& sa = cols.at("SA");
        for (const std::string method : {"FedAvg", "VPDL", "CYCle"}) {
            CAPTURE(method);
            const FairnessSummary s = summarize(gain_record(sa, cols.at(method)));
            const FairnessSummary pop = summarize(gain_record(sa, cols.at(method)), SpreadConvention::Population);
            CHECK(std::abs(s.mva - printed.at(partition + "/MVA").at(method)[0]) <= 0.01);
            CHECK(std::abs(s.mcg - printed.at(partition + "/MCG").at(method)[0]) <= 0.01);
            // the printed spreads follow the population convention
            CHECK(std::abs(*pop.cgs - printed.at(partition + "/CGS").at(method)[0]) <= 0.01);
        }
    }
}

TEST_CASE("homogeneous CYCle column spread") {
    const auto table = read_table("cifar10_per_participant.csv");
    const auto& cols = table.at("homogeneous");
    const GainRecord r = gain_record(cols.at("SA"), cols.at("CYCle"));
    CHECK(std::abs(*summarize(r).cgs - 0.408) <= 0.001);
    CHECK(std::abs(*summarize(r, SpreadConvention::Population).cgs - 0.365) <= 0.001);
}

TEST_CASE("imbalanced tables show the largest holder losing under VPDL but not under CYCle") {
    const auto table = read_table("cifar10_per_participant.csv");
    for (const std::string partition : {"imbalanced_0.8_1", "imbalanced_0.6_1"}) {
        const auto& cols = table.at(partition);
        const GainRecord vpdl = gain_record(cols.at("SA"), cols.at("VPDL"));
        const GainRecord cyc = gain_record(cols.at("SA"), cols.at("CYCle"));
        CHECK(vpdl.gains[0] < 0.0);
        for (double g : cyc.gains) CHECK(g >= 0.0);
        CHECK(*summarize(cyc).cgs < *summarize(vpdl).cgs);
    }
}
