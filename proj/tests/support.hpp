#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "causalcert.hpp"

namespace testing_support {

namespace cc = causalcert;

// Rows (x..., t, y) without oracle fields.
inline cc::CausalDataset dataset(std::size_t d, const std::vector<std::vector<double>>& xs, const std::vector<int>& ts,
                                 const std::vector<double>& ys) {
    std::vector<cc::ObservedSample> rows;
    for (std::size_t i = 0; i < xs.size(); ++i) rows.push_back({xs[i], ts[i], ys[i]});
    return cc::CausalDataset(d, std::move(rows));
}

// n rows, one covariate x_i = i / n, alternate arms, y = f(x) + t.
template <class F>
cc::CausalDataset alternating(std::size_t n, F&& f) {
    std::vector<cc::ObservedSample> rows;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = double(i) / double(n);
        const int t = int(i % 2);
        rows.push_back({{x}, t, f(x) + t});
    }
    return cc::CausalDataset(1, std::move(rows));
}

inline std::filesystem::path temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "causalcert_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

inline void write_file(const std::filesystem::path& p, const std::string& body) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    f << body;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace testing_support
