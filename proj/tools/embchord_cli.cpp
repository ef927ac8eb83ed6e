// Command-line front end: scenario runner, canned acceptance bench,
// report inspection, and the advertisement codec check.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "embchord/advertisement.hpp"
#include "embchord/sim/bench.hpp"
#include "embchord/sim/scenario.hpp"

using namespace embchord;

namespace {

std::optional<std::uint64_t> env_seed() {
    const char* env = std::getenv("EMBCHORD_SEED");
    if (!env || !*env) return std::nullopt;
    try {
        return std::stoull(env);
    } catch (const std::exception&) {
        throw config_error("EMBCHORD_SEED is not a number");
    }
}

int cmd_run(const std::string& file, std::optional<std::uint64_t> seed_flag,
            const std::string& out_path, const std::string& format) {
    std::ifstream in(file);
    if (!in) {
        std::cerr << "error: cannot open scenario file: " << file << "\n";
        return 1;
    }
    std::string name = file;
    auto slash = name.find_last_of('/');
    if (slash != std::string::npos) name = name.substr(slash + 1);

    sim::Scenario scenario = sim::parse_scenario(in, name);
    std::optional<std::uint64_t> seed = env_seed(); // env overrides the flag
    if (!seed) seed = seed_flag;

    sim::ScenarioRunner runner(std::move(scenario), seed);
    sim::MetricsReport report = runner.run();

    std::ostringstream rendered;
    if (format == "table")
        report.render_table(rendered);
    else
        report.render_lines(rendered);

    if (out_path.empty()) {
        std::cout << rendered.str();
    } else {
        std::ofstream out(out_path);
        if (!out) {
            std::cerr << "error: cannot write " << out_path << "\n";
            return 1;
        }
        out << rendered.str();
    }
    return 0;
}

int cmd_bench(const std::string& suite, std::optional<std::uint64_t> seed_flag,
              const std::string& out_path) {
    if (suite != "acceptance") {
        std::cerr << "error: unknown bench suite: " << suite << " (available: acceptance)\n";
        return 2;
    }
    std::uint64_t seed = env_seed().value_or(seed_flag.value_or(1));
    sim::bench::BenchReport report = sim::bench::run_acceptance(seed);
    for (const auto& r : report.results)
        std::cout << (r.passed ? "PASS" : "FAIL") << "  " << r.number << ". " << r.name << " — "
                  << r.detail << "\n";
    std::cout << (report.all_passed() ? "acceptance suite: all criteria PASS"
                                      : "acceptance suite: FAILURES present")
              << "\n";
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << report.to_lines();
    }
    return report.all_passed() ? 0 : 1;
}

int cmd_inspect(const std::string& file) {
    std::ifstream in(file);
    if (!in) {
        std::cerr << "error: cannot open report: " << file << "\n";
        return 1;
    }
    std::map<std::string, std::vector<double>> values;
    std::map<std::string, std::size_t> statuses;
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) {
        lines++;
        std::istringstream ss(line);
        std::string tok;
        std::string metric;
        std::optional<double> value;
        while (ss >> tok) {
            auto eq = tok.find('=');
            if (eq == std::string::npos) continue;
            std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
            if (key == "metric") metric = val;
            if (key == "status") statuses[val]++;
            if (key == "value") {
                try {
                    value = std::stod(val);
                } catch (const std::exception&) {
                }
            }
        }
        if (!metric.empty() && value) values[metric].push_back(*value);
    }
    std::cout << "report: " << file << " (" << lines << " lines)\n";
    for (const auto& [status, count] : statuses)
        std::cout << "  criteria " << status << ": " << count << "\n";
    for (const auto& [metric, vals] : values) {
        double sum = 0, mn = vals.front(), mx = vals.front();
        for (double v : vals) {
            sum += v;
            mn = std::min(mn, v);
            mx = std::max(mx, v);
        }
        std::cout << "  " << metric << ": n=" << vals.size() << " mean=" << sum / vals.size()
                  << " min=" << mn << " max=" << mx << "\n";
    }
    return 0;
}

/// Parses the little key=value advertisement description format used by
/// `codec`: kind, name, subject, scope, version, expires, attr.<k>=<v>,
/// endpoint=<kind>:<addr>, idbits.
Advertisement parse_adv_file(std::istream& in, unsigned& bits) {
    Advertisement adv;
    adv.kind = adv_kind::resource;
    std::string subject_name = "resource";
    std::string scope_name = "net";
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        lineno++;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        while (!line.empty() && (line.back() == ' ' || line.back() == '\r')) line.pop_back();
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("line " + std::to_string(lineno) + ": expected key=value");
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (key == "kind") {
            if (val == "Peer") adv.kind = adv_kind::peer;
            else if (val == "Group") adv.kind = adv_kind::group;
            else if (val == "Pipe") adv.kind = adv_kind::pipe;
            else if (val == "Resource") adv.kind = adv_kind::resource;
            else throw config_error("unknown kind: " + val);
        } else if (key == "name") {
            adv.name = val;
        } else if (key == "subject") {
            subject_name = val;
        } else if (key == "scope") {
            scope_name = val;
        } else if (key == "version") {
            adv.version = std::uint8_t(std::stoul(val));
        } else if (key == "expires") {
            adv.expiration_ms = std::stoull(val);
        } else if (key == "idbits") {
            bits = unsigned(std::stoul(val));
        } else if (key.rfind("attr.", 0) == 0) {
            adv.attributes[key.substr(5)] = val;
        } else if (key == "endpoint") {
            auto colon = val.find(':');
            if (colon == std::string::npos)
                throw config_error("endpoint needs <kind>:<address>");
            std::string kind = val.substr(0, colon);
            EndpointAddress ep;
            if (kind == "mem") ep.kind = transport_kind::mem;
            else if (kind == "tcp") ep.kind = transport_kind::tcp;
            else if (kind == "narrowsim") ep.kind = transport_kind::narrow_sim;
            else throw config_error("unknown endpoint kind: " + kind);
            ep.address = val.substr(colon + 1);
            adv.endpoints.push_back(std::move(ep));
        } else {
            throw config_error("line " + std::to_string(lineno) + ": unknown key " + key);
        }
    }
    if (adv.name.empty()) adv.name = subject_name;
    adv.subject_id = hash_to_id(subject_name, bits);
    adv.group_scope = GroupId{hash_to_id(scope_name, bits)};
    return adv;
}

int cmd_codec(const std::string& file) {
    std::ifstream in(file);
    if (!in) {
        std::cerr << "error: cannot open advertisement file: " << file << "\n";
        return 1;
    }
    unsigned bits = 16;
    Advertisement adv = parse_adv_file(in, bits);
    byte_buffer encoded = encode_advertisement(adv);
    Advertisement back = decode_advertisement(encoded, bits);
    bool roundtrip = back == adv;
    std::string plain = render_plain(adv);
    double ratio = double(encoded.size()) / double(plain.size());
    std::cout << "round-trip: " << (roundtrip ? "exact" : "MISMATCH") << "\n"
              << "encoded bytes: " << encoded.size() << "\n"
              << "plain-text bytes: " << plain.size() << "\n";
    std::printf("ratio: %.3f\n", ratio);
    std::cout << "hex: " << to_hex(encoded) << "\n";
    return roundtrip ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"peer-to-peer overlay middleware: deterministic simulation harness"};
    app.require_subcommand(1);

    std::string run_file, run_out, run_format = "table";
    std::optional<std::uint64_t> run_seed;
    auto* run = app.add_subcommand("run", "execute a scenario file");
    run->add_option("file", run_file, "scenario file")->required();
    run->add_option("--seed", run_seed, "random seed (EMBCHORD_SEED overrides)");
    run->add_option("--out", run_out, "write the report here instead of stdout");
    run->add_option("--format", run_format, "table|jsonl")
        ->check(CLI::IsMember({"table", "jsonl"}));

    std::string bench_suite, bench_out;
    std::optional<std::uint64_t> bench_seed;
    auto* bench = app.add_subcommand("bench", "run a canned scenario suite");
    bench->add_option("suite", bench_suite, "suite name (acceptance)")->required();
    bench->add_option("--seed", bench_seed, "random seed (EMBCHORD_SEED overrides)");
    bench->add_option("--out", bench_out, "also write the machine report here");

    std::string inspect_file;
    auto* inspect = app.add_subcommand("inspect", "summarize a report file");
    inspect->add_option("report", inspect_file, "report file")->required();

    std::string codec_file;
    auto* codec = app.add_subcommand("codec", "advertisement encode/decode and size check");
    codec->add_option("adv-file", codec_file, "advertisement description file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2; // usage errors exit 2
    }

    try {
        if (run->parsed()) return cmd_run(run_file, run_seed, run_out, run_format);
        if (bench->parsed()) return cmd_bench(bench_suite, bench_seed, bench_out);
        if (inspect->parsed()) return cmd_inspect(inspect_file);
        if (codec->parsed()) return cmd_codec(codec_file);
    } catch (const sim::scenario_parse_error& e) {
        std::cerr << "scenario parse error: " << e.what() << "\n";
        return 1;
    } catch (const sim::scenario_error& e) {
        std::cerr << "scenario error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
