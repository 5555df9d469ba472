// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "relatape/populate.hpp"

/// Make callbacks for the bundled LC-MS demonstration schema (`lcms`).
namespace relatape::lcms {

constexpr std::size_t kSpectrumPoints = 256;

/// Baseline noise plus 3..7 Gaussian peaks, driven only by mt19937_64 raw output so
/// the result is identical across standard libraries.
std::vector<double> synthetic_spectrum(std::uint64_t seed, std::size_t n = kSpectrumPoints);

/// Strict local maxima above `threshold`, thinned so kept peaks are at least
/// `min_separation` points apart (taller peaks win, then lower index). Ascending.
std::vector<std::size_t> find_peaks(const std::vector<double>& y, double threshold, std::int64_t min_separation);

MakeResult make_spectrum(const Record& key, MakeContext& ctx);
MakeResult make_peak_detection(const Record& key, MakeContext& ctx);

/// Keyed by qualified table name.
std::map<std::string, MakeCallback> makes(const std::string& schema = "lcms");

} // namespace relatape::lcms
