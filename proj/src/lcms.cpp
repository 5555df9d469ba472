// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#include "relatape/lcms.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "relatape/error.hpp"

namespace relatape::lcms {

namespace {

double unit(std::mt19937_64& gen) { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

Record single(const std::vector<Record>& rows, const char* table) {
    if (rows.size() != 1)
        throw Error(ErrorCode::MakeError,
                    std::string("expected one upstream ") + table + " row, found " + std::to_string(rows.size()));
    return rows.front();
}

template <class T>
const T& field(const Record& r, const std::string& name) {
    return std::get<T>(r.at(name));
}

} // namespace

std::vector<double> synthetic_spectrum(std::uint64_t seed, std::size_t n) {
    std::mt19937_64 gen(seed);
    std::vector<double> y(n);
    for (auto& v : y) v = 0.05 * unit(gen);
    const std::uint64_t peaks = 3 + gen() % 5;
    for (std::uint64_t p = 0; p < peaks; ++p) {
        const double center = unit(gen) * static_cast<double>(n - 1);
        const double amplitude = 0.5 + 4.5 * unit(gen);
        const double width = 1.5 + 3.0 * unit(gen);
        for (std::size_t i = 0; i < n; ++i) {
            const double z = (static_cast<double>(i) - center) / width;
            y[i] += amplitude * std::exp(-0.5 * z * z);
        }
    }
    return y;
}

std::vector<std::size_t> find_peaks(const std::vector<double>& y, double threshold, std::int64_t min_separation) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 1; i + 1 < y.size(); ++i)
        if (y[i] > threshold && y[i] > y[i - 1] && y[i] > y[i + 1]) candidates.push_back(i);
    std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) { return y[a] > y[b]; });
    std::vector<std::size_t> kept;
    for (std::size_t c : candidates) {
        bool clear = std::all_of(kept.begin(), kept.end(), [&](std::size_t k) {
            const auto d = static_cast<std::int64_t>(c > k ? c - k : k - c);
            return d >= min_separation;
        });
        if (clear) kept.push_back(c);
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

MakeResult make_spectrum(const Record& key, MakeContext& ctx) {
    const Record scan = single(ctx.fetch_key("scan"), "scan");
    const auto seed = static_cast<std::uint64_t>(field<std::int64_t>(scan, "seed"));
    MakeResult out;
    out.master = key;
    out.master["intensities"] = F64Array{{static_cast<std::int64_t>(kSpectrumPoints)}, synthetic_spectrum(seed)};
    out.master["n_points"] = static_cast<std::int64_t>(kSpectrumPoints);
    return out;
}

MakeResult make_peak_detection(const Record& key, MakeContext& ctx) {
    const Record spectrum = single(ctx.fetch_key("spectrum"), "spectrum");
    const Record params = single(ctx.fetch_key("detection_params"), "detection_params");
    const Record scan = single(ctx.fetch_key("scan"), "scan");
    const Value intensities = ctx.materialize(spectrum.at("intensities"));
    const std::vector<double>& y = std::get<F64Array>(intensities).data;
    const double mz_low = field<double>(scan, "mz_low");
    const double mz_high = field<double>(scan, "mz_high");
    const double step = y.size() > 1 ? (mz_high - mz_low) / static_cast<double>(y.size() - 1) : 0.0;

    const auto peaks = find_peaks(y, field<double>(params, "threshold"), field<std::int64_t>(params, "min_separation"));
    MakeResult out;
    out.master = key;
    out.master["n_peaks"] = static_cast<std::int64_t>(peaks.size());
    auto& rows = out.parts[TableRef{ctx.target().schema, ctx.target().table + "__peak"}];
    for (std::size_t i = 0; i < peaks.size(); ++i) {
        Record r = key;
        r["peak_idx"] = static_cast<std::int64_t>(i);
        r["mz"] = mz_low + step * static_cast<double>(peaks[i]);
        r["intensity"] = y[peaks[i]];
        rows.push_back(std::move(r));
    }
    return out;
}

std::map<std::string, MakeCallback> makes(const std::string& schema) {
    return {{schema + ".spectrum", make_spectrum}, {schema + ".peak_detection", make_peak_detection}};
}

} // namespace relatape::lcms
