#pragma once

// Micro-PMU measurement surface: frames carry the root-node voltage phasor
// and the current phasor into each load area.  Areas sharing a root node get
// separate current channels.  The CSV schema is fixed text with 9
// significant digits so reruns are byte-identical.

#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fidvr/simulation.hpp"
#include "fidvr/types.hpp"

namespace fidvr {

struct MuPmuFrame {
    double t = 0.0;
    std::string area;
    int node = 0;
    Complex v{0.0, 0.0};
    Complex i{0.0, 0.0};
};

struct MeasurementNoise {
    double sigma = 0.0;  // relative Gaussian noise on magnitudes, off by default
    std::uint64_t seed = 0;
};

/// Decimates the simulation output to the reporting rate.  `placement` maps
/// area id to the measured node; every area in the result must be present.
/// The reporting rate must divide the simulation rate.
inline std::vector<MuPmuFrame> emit_mupmu_stream(const SimulationResult& result,
                                                 const std::map<std::string, int>& placement,
                                                 double rate_hz,
                                                 const MeasurementNoise& noise = {}) {
    if (rate_hz <= 0.0) throw InputError("reporting rate must be positive");
    const double sim_rate = 1.0 / result.dt;
    const double ratio = sim_rate / rate_hz;
    const int stride = static_cast<int>(std::llround(ratio));
    if (stride < 1 || std::abs(ratio - stride) > 1e-9)
        throw InputError("reporting rate must divide the simulation rate");

    std::vector<int> node_of(result.areas.size());
    std::map<int, int> bus_col;
    for (std::size_t b = 0; b < result.bus_ids.size(); ++b)
        bus_col[result.bus_ids[b]] = static_cast<int>(b);
    for (std::size_t a = 0; a < result.areas.size(); ++a) {
        auto it = placement.find(result.areas[a].id);
        if (it == placement.end())
            throw InputError("placement missing area " + result.areas[a].id);
        auto col = bus_col.find(it->second);
        if (col == bus_col.end())
            throw InputError("placement node " + std::to_string(it->second) + " not in result");
        node_of[a] = it->second;
    }
    for (const auto& [area, node] : placement) {
        bool known = false;
        for (const auto& s : result.areas) known |= (s.id == area);
        if (!known) throw InputError("placement names unknown area " + area);
    }

    std::mt19937_64 rng(noise.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto perturb = [&](Complex z) {
        if (noise.sigma <= 0.0) return z;
        return z * (1.0 + noise.sigma * gauss(rng));
    };

    std::vector<MuPmuFrame> frames;
    frames.reserve((result.t.size() / static_cast<std::size_t>(stride) + 1) * result.areas.size());
    for (std::size_t k = 0; k < result.t.size(); k += static_cast<std::size_t>(stride)) {
        for (std::size_t a = 0; a < result.areas.size(); ++a) {
            MuPmuFrame f;
            f.t = result.t[k];
            f.area = result.areas[a].id;
            f.node = node_of[a];
            f.v = perturb(result.bus_v(static_cast<Eigen::Index>(k), bus_col.at(node_of[a])));
            f.i = perturb(result.areas[a].i_area[k]);
            frames.push_back(std::move(f));
        }
    }
    return frames;
}

/// Default placement: every area measured at its own root node.
inline std::vector<MuPmuFrame> emit_mupmu_stream(const SimulationResult& result, double rate_hz,
                                                 const MeasurementNoise& noise = {}) {
    std::map<std::string, int> placement;
    for (const auto& a : result.areas) placement[a.id] = a.root_bus;
    return emit_mupmu_stream(result, placement, rate_hz, noise);
}

inline constexpr const char* kMuPmuCsvHeader =
    "t_s,area_id,node_id,v_mag_pu,v_ang_rad,i_mag_pu,i_ang_rad";

inline std::string format_mupmu_csv(const std::vector<MuPmuFrame>& frames) {
    std::string out(kMuPmuCsvHeader);
    out.push_back('\n');
    char buf[160];
    for (const auto& f : frames) {
        std::snprintf(buf, sizeof(buf), "%.8e,%s,%d,%.8e,%.8e,%.8e,%.8e\n", f.t, f.area.c_str(),
                      f.node, std::abs(f.v), std::arg(f.v), std::abs(f.i), std::arg(f.i));
        out += buf;
    }
    return out;
}

inline void write_mupmu_csv(const std::string& path, const std::vector<MuPmuFrame>& frames) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open " + path + " for writing");
    out << format_mupmu_csv(frames);
}

inline std::vector<MuPmuFrame> parse_mupmu_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw InputError("empty uPMU stream");
    if (line.size() && line.back() == '\r') line.pop_back();
    if (line != kMuPmuCsvHeader)
        throw InputError("unexpected uPMU CSV header: " + line);
    std::vector<MuPmuFrame> frames;
    while (std::getline(in, line)) {
        if (line.size() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        MuPmuFrame f;
        double vals[6];
        int vi = 0;
        for (int col = 0; col < 7; ++col) {
            if (!std::getline(ss, field, ',')) throw InputError("short uPMU CSV row: " + line);
            if (col == 1)
                f.area = field;
            else if (col == 2)
                f.node = std::stoi(field);
            else
                vals[vi++] = std::stod(field);
        }
        f.t = vals[0];
        f.v = std::polar(vals[1], vals[2]);
        f.i = std::polar(vals[3], vals[4]);
        frames.push_back(std::move(f));
    }
    return frames;
}

inline std::vector<MuPmuFrame> read_mupmu_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    return parse_mupmu_csv(in);
}

}  // namespace fidvr
