#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "embchord/sim/bench.hpp"
#include "embchord/sim/scenario.hpp"

using namespace embchord;
using sim::parse_scenario_text;
using sim::Scenario;
using sim::scenario_error;
using sim::scenario_parse_error;
using sim::ScenarioRunner;

namespace {

const char* kBasicScenario = R"(
# two-segment world with a bridge
seed 5
idbits 16
segment lan mtu=1500 bw=1250000 lat=1 loss=0
segment nb mtu=127 bw=2500 lat=15 loss=0
group sensors parent=net policy=secured creator=hub
peer hub at lan,nb groups=sensors
peer probe at nb groups=sensors
peer viewer at lan
at 0 join hub
at 500 join probe via=hub
at 1000 join viewer via=hub
at 20000 publish probe temperature path=/temp group=sensors
at 30000 discover hub temperature group=sensors
at 31000 request hub probe GET /temp group=sensors
at 32000 propagate hub sensors ping
at 33000 rotate_key hub sensors
)";

} // namespace

TEST_CASE("the full grammar parses") {
    Scenario sc = parse_scenario_text(kBasicScenario, "basic");
    CHECK(sc.seed == 5);
    CHECK(sc.id_bits == 16);
    REQUIRE(sc.segments.size() == 2);
    CHECK(sc.segments[1].profile.mtu == 127);
    CHECK(sc.segments[1].profile.bandwidth_bps == 2500);
    REQUIRE(sc.groups.size() == 1);
    CHECK(sc.groups[0].policy == group_policy::secured);
    CHECK(sc.groups[0].creator == "hub");
    REQUIRE(sc.peers.size() == 3);
    CHECK(sc.peers[0].segments == std::vector<std::string>{"lan", "nb"});
    CHECK(sc.peers[0].groups == std::vector<std::string>{"sensors"});
    REQUIRE(sc.timeline.size() == 8);
    CHECK(sc.timeline.back().verb == "rotate_key");
}

TEST_CASE("parse errors carry the offending line number") {
    auto expect_line = [](const std::string& text, std::size_t line) {
        try {
            parse_scenario_text(text);
            FAIL("expected scenario_parse_error");
        } catch (const scenario_parse_error& e) {
            CHECK(e.line() == line);
        }
    };
    expect_line("bogus directive\n", 1);
    expect_line("segment lan mtu=abc\n", 1);
    expect_line("segment lan mtu=64\npeer a at ghost\n", 2);
    expect_line("segment lan mtu=64\npeer a at lan\nat 100 join a\nat 50 join a\n", 4);
    expect_line("segment lan mtu=64\npeer a at lan\nat 0 levitate a\n", 3);
    expect_line("segment lan mtu=64\npeer a at lan\nat 0 join ghost\n", 3);
    expect_line("segment lan mtu=64\npeer a at lan groups=undeclared\n", 2);
    expect_line("segment lan mtu=64\nsegment lan mtu=64\n", 2);
    // an MTU below the fragment-header floor is a profile violation
    expect_line("segment lan mtu=16\n", 1);
}

TEST_CASE("a scenario with no peers is rejected") {
    CHECK_THROWS_AS(parse_scenario_text("segment lan mtu=64\n"), scenario_parse_error);
}

TEST_CASE("actions against not-yet-joined peers are scenario errors") {
    const char* text = R"(
segment lan mtu=1500 bw=1250000 lat=1 loss=0
peer a at lan
peer b at lan
at 0 join a
at 100 publish b temperature
)";
    ScenarioRunner runner(parse_scenario_text(text));
    CHECK_THROWS_AS(runner.run(), scenario_error);
}

TEST_CASE("a full scenario runs and reports its traffic") {
    Scenario sc = parse_scenario_text(kBasicScenario, "basic");
    ScenarioRunner runner(std::move(sc));
    sim::MetricsReport report = runner.run();
    CHECK(report.counter("scenario_discover_ok") == 1);
    CHECK(report.counter("scenario_discover_hits") == 1);
    CHECK(report.counter("scenario_request_ok") == 1);
    CHECK(report.counter("scenario_rotate_ok") == 1);
    CHECK(report.counter("scenario_group_join_ok") == 1); // probe joined sensors
    CHECK(report.counter("peers_alive") == 3);
    // traffic crossed both segments
    CHECK(report.counter("segment_bytes.lan") > 0);
    CHECK(report.counter("segment_bytes.nb") > 0);
}

TEST_CASE("identical (scenario, seed) pairs produce byte-identical reports") {
    auto render = [](std::uint64_t seed) {
        Scenario sc = parse_scenario_text(sim::bench::determinism_scenario_text(), "det");
        ScenarioRunner runner(std::move(sc), seed);
        return runner.run().to_lines();
    };
    CHECK(render(9) == render(9));
    CHECK(render(9) != render(10)); // lossy links: different seeds diverge
}

TEST_CASE("shipped ring32 scenario: discovery stays within log2(N) hops") {
    std::ifstream in(std::string(EMBCHORD_SCENARIO_DIR) + "/ring32.scn");
    REQUIRE(in.good());
    Scenario sc = sim::parse_scenario(in, "ring32.scn");
    REQUIRE(sc.peers.size() == 32);
    ScenarioRunner runner(std::move(sc));
    sim::MetricsReport report = runner.run();
    CHECK(report.counter("scenario_discover_ok") == 12);
    CHECK(report.counter("scenario_request_ok") == 2);
    const auto* hops = report.samples_of("discovery_hops");
    REQUIRE(hops != nullptr);
    CHECK(report.mean("discovery_hops") <= 5.0); // log2(32)
}

TEST_CASE("shipped chain scenario: cross-segment request with traffic on every segment") {
    std::ifstream in(std::string(EMBCHORD_SCENARIO_DIR) + "/chain.scn");
    REQUIRE(in.good());
    Scenario sc = sim::parse_scenario(in, "chain.scn");
    ScenarioRunner runner(std::move(sc));
    sim::MetricsReport report = runner.run();
    CHECK(report.counter("scenario_request_ok") == 1);
    CHECK(report.counter("segment_bytes.office") > 0);
    CHECK(report.counter("segment_bytes.field") > 0);
    CHECK(report.counter("segment_bytes.plant") > 0);
    CHECK(report.counter("relayed") > 0);
}

TEST_CASE("crash action silences a peer") {
    const char* text = R"(
segment lan mtu=1500 bw=1250000 lat=1 loss=0
peer a at lan
peer b at lan
at 0 join a
at 500 join b via=a
at 5000 crash b
)";
    ScenarioRunner runner(parse_scenario_text(text));
    sim::MetricsReport report = runner.run();
    CHECK(report.counter("peers_alive") == 1);
}
