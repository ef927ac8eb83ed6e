#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace embchord::sim {

/// Run-wide counters and samples. Rendering is fully deterministic
/// (sorted keys, fixed number formatting) so identical (scenario, seed)
/// pairs produce byte-identical reports.
class MetricsReport {
public:
    void count(const std::string& name, std::uint64_t delta = 1) { counters_[name] += delta; }

    void sample(const std::string& name, double value) { samples_[name].push_back(value); }

    std::uint64_t counter(const std::string& name) const {
        auto it = counters_.find(name);
        return it == counters_.end() ? 0 : it->second;
    }

    const std::vector<double>* samples_of(const std::string& name) const {
        auto it = samples_.find(name);
        return it == samples_.end() ? nullptr : &it->second;
    }

    double mean(const std::string& name) const {
        const auto* s = samples_of(name);
        if (!s || s->empty()) return 0.0;
        return std::accumulate(s->begin(), s->end(), 0.0) / double(s->size());
    }

    double max_of(const std::string& name) const {
        const auto* s = samples_of(name);
        if (!s || s->empty()) return 0.0;
        return *std::max_element(s->begin(), s->end());
    }

    void set_scenario(std::string name) { scenario_ = std::move(name); }
    const std::string& scenario() const { return scenario_; }

    /// Machine form: one flat `metric=<name> value=<v> [unit=<u>]
    /// [scenario=<s>]` line per entry; samples emit count/mean/min/max.
    void render_lines(std::ostream& os) const {
        auto tail = [this]() { return scenario_.empty() ? "" : " scenario=" + scenario_; };
        for (const auto& [name, value] : counters_)
            os << "metric=" << name << " value=" << value << tail() << "\n";
        for (const auto& [name, values] : samples_) {
            os << "metric=" << name << ".count value=" << values.size() << tail() << "\n";
            if (values.empty()) continue;
            auto [mn, mx] = std::minmax_element(values.begin(), values.end());
            double mean = std::accumulate(values.begin(), values.end(), 0.0) / double(values.size());
            os << "metric=" << name << ".mean value=" << format(mean) << tail() << "\n";
            os << "metric=" << name << ".min value=" << format(*mn) << tail() << "\n";
            os << "metric=" << name << ".max value=" << format(*mx) << tail() << "\n";
        }
    }

    /// Human form: aligned table plus a histogram for hop samples.
    void render_table(std::ostream& os) const {
        if (!scenario_.empty()) os << "scenario: " << scenario_ << "\n";
        os << "-- counters --\n";
        for (const auto& [name, value] : counters_)
            os << "  " << pad(name) << " " << value << "\n";
        os << "-- samples --\n";
        for (const auto& [name, values] : samples_) {
            if (values.empty()) continue;
            auto [mn, mx] = std::minmax_element(values.begin(), values.end());
            double mean = std::accumulate(values.begin(), values.end(), 0.0) / double(values.size());
            os << "  " << pad(name) << " n=" << values.size() << " mean=" << format(mean)
               << " min=" << format(*mn) << " max=" << format(*mx) << "\n";
        }
        const auto* hops = samples_of("lookup_hops");
        if (hops && !hops->empty()) {
            os << "-- lookup hop histogram --\n";
            std::map<int, int> hist;
            for (double h : *hops) hist[int(h)]++;
            for (const auto& [h, n] : hist) os << "  " << h << " hops: " << n << "\n";
        }
    }

    std::string to_lines() const {
        std::ostringstream ss;
        render_lines(ss);
        return ss.str();
    }

    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;

private:
    static std::string format(double v) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.6g", v);
        return buf;
    }

    static std::string pad(const std::string& s) {
        std::string out = s;
        if (out.size() < 32) out.resize(32, ' ');
        return out;
    }

    std::map<std::string, std::uint64_t> counters_;
    std::map<std::string, std::vector<double>> samples_;
    std::string scenario_;
};

} // namespace embchord::sim
