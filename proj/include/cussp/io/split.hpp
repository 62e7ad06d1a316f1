#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "cussp/common.hpp"
#include "cussp/io/manifest.hpp"

namespace cussp::io {

struct SplitSpec {
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
    uint64_t seed = 0;
};

// Deterministic stratified split over the labeled subset. Unlabeled entries
// never appear on either side. Per-class test counts are round(n * fraction),
// so each class proportion matches test_fraction within one sample.
inline SplitSpec stratified_split(const DatasetManifest& m, double test_fraction, uint64_t seed,
                                  bool stratified = true) {
    if (test_fraction < 0.0 || test_fraction > 1.0)
        throw ValidationError("test_fraction must be in [0,1]");
    std::vector<std::string> mr_ids, non_mr_ids;
    for (const auto& e : m.entries) {
        if (e.label == Label::MR) mr_ids.push_back(e.sample_id);
        else if (e.label == Label::NonMR) non_mr_ids.push_back(e.sample_id);
    }
    if (stratified && (mr_ids.size() < 2 || non_mr_ids.size() < 2))
        throw ValidationError("cannot stratify: need at least 2 labeled entries per class (have " +
                              std::to_string(mr_ids.size()) + " MR, " + std::to_string(non_mr_ids.size()) +
                              " nonMR)");
    std::sort(mr_ids.begin(), mr_ids.end());
    std::sort(non_mr_ids.begin(), non_mr_ids.end());

    SplitSpec spec;
    spec.seed = seed;
    std::mt19937_64 rng(splitmix64(seed));
    auto take = [&](std::vector<std::string>& ids, size_t n_test) {
        std::shuffle(ids.begin(), ids.end(), rng);
        for (size_t i = 0; i < ids.size(); ++i)
            (i < n_test ? spec.test_ids : spec.train_ids).push_back(ids[i]);
    };
    if (stratified) {
        take(mr_ids, static_cast<size_t>(std::llround(test_fraction * static_cast<double>(mr_ids.size()))));
        take(non_mr_ids, static_cast<size_t>(std::llround(test_fraction * static_cast<double>(non_mr_ids.size()))));
    } else {
        std::vector<std::string> all = mr_ids;
        all.insert(all.end(), non_mr_ids.begin(), non_mr_ids.end());
        std::sort(all.begin(), all.end());
        if (all.empty()) throw ValidationError("no labeled entries to split");
        take(all, static_cast<size_t>(std::llround(test_fraction * static_cast<double>(all.size()))));
    }
    std::sort(spec.train_ids.begin(), spec.train_ids.end());
    std::sort(spec.test_ids.begin(), spec.test_ids.end());
    return spec;
}

inline void save_split(const SplitSpec& s, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write split " + path.string());
    f << "seed\t" << s.seed << "\n";
    for (const auto& id : s.train_ids) f << "train\t" << id << "\n";
    for (const auto& id : s.test_ids) f << "test\t" << id << "\n";
}

inline SplitSpec load_split(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open split " + path.string());
    SplitSpec s;
    std::string kind, value;
    int line_no = 0;
    std::string line;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        const size_t tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError("expected kind<TAB>value", line_no);
        kind = line.substr(0, tab);
        value = line.substr(tab + 1);
        if (kind == "seed") s.seed = std::stoull(value);
        else if (kind == "train") s.train_ids.push_back(value);
        else if (kind == "test") s.test_ids.push_back(value);
        else throw ParseError("unknown row kind '" + kind + "'", line_no);
    }
    return s;
}

}  // namespace cussp::io
