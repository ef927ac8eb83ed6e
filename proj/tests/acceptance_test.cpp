// Acceptance suite: every release criterion at its stated tolerance, one
// pass/fail line per criterion. The whole suite runs twice so the final
// check can compare the two rendered reports byte for byte.

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>

#include "embchord/sim/bench.hpp"

using embchord::sim::bench::BenchReport;
using embchord::sim::bench::run_acceptance;

namespace {

constexpr std::uint64_t kSeed = 1;

const BenchReport& first_run() {
    static BenchReport report = run_acceptance(kSeed);
    return report;
}

void check_criterion(int number) {
    const BenchReport& report = first_run();
    for (const auto& r : report.results) {
        if (r.number != number) continue;
        std::printf("%s  criterion %2d  %s — %s\n", r.passed ? "PASS" : "FAIL", r.number,
                    r.name.c_str(), r.detail.c_str());
        INFO(r.name << ": " << r.detail);
        CHECK(r.passed);
        return;
    }
    FAIL("criterion " << number << " missing from the bench report");
}

} // namespace

TEST_CASE("acceptance 1: chord oracle equivalence on rings of 8/32/128") { check_criterion(1); }
TEST_CASE("acceptance 2: mean lookup hop bound on the 128-node ring") { check_criterion(2); }
TEST_CASE("acceptance 3: records survive three consecutive crashes (r=4)") { check_criterion(3); }
TEST_CASE("acceptance 4: convergence from 20 random join orders") { check_criterion(4); }
TEST_CASE("acceptance 5: transparent routing across the 3-segment chain") { check_criterion(5); }
TEST_CASE("acceptance 6: fragmentation count and permutation reassembly") { check_criterion(6); }
TEST_CASE("acceptance 7: exact retransmission backoff and final timeout") { check_criterion(7); }
TEST_CASE("acceptance 8: secure group confidentiality and eviction") { check_criterion(8); }
TEST_CASE("acceptance 9: exactly-once multicast over 100 random groups") { check_criterion(9); }
TEST_CASE("acceptance 10: discovery scope isolation and fault tolerance") { check_criterion(10); }
TEST_CASE("acceptance 11: advertisement codec round trip and compactness") { check_criterion(11); }
TEST_CASE("acceptance 12: bench suite is byte-identical across same-seed runs") {
    check_criterion(12);
    // the literal contract: run the whole suite twice with one seed and
    // compare the rendered reports
    BenchReport second = run_acceptance(kSeed);
    bool identical = first_run().to_lines() == second.to_lines();
    std::printf("%s  criterion 12b whole-suite re-run byte-identical\n",
                identical ? "PASS" : "FAIL");
    CHECK(identical);
}
