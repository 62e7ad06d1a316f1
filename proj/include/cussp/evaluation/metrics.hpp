#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cussp/common.hpp"

namespace cussp::evaluation {

struct Confusion {
    size_t tp = 0, fp = 0, tn = 0, fn = 0;
    size_t total() const { return tp + fp + tn + fn; }
};

// prediction = score >= threshold
inline Confusion confusion(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
    if (scores.size() != labels.size()) throw ValidationError("confusion: scores/labels length mismatch");
    if (scores.empty()) throw ValidationError("confusion: empty input");
    Confusion c;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw ValidationError("confusion: labels must be 0/1");
        const bool pred = scores[i] >= threshold;
        if (pred && labels[i] == 1) ++c.tp;
        else if (pred) ++c.fp;
        else if (labels[i] == 1) ++c.fn;
        else ++c.tn;
    }
    return c;
}

// Rank-statistic AUC: probability that a random positive outscores a random
// negative, ties counted 0.5. Computed via average ranks (Mann-Whitney U).
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    size_t n_pos = 0, n_neg = 0;
    for (int l : labels) (l == 1 ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0) throw ValidationError("roc_auc: need both classes");
    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));  // 1-based
        for (size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
        i = j;
    }
    const double u = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

struct RocPoint {
    double fpr = 0, tpr = 0, threshold = 0;
};
struct PrPoint {
    double recall = 0, precision = 0, threshold = 0;
};

struct EvaluationReport {
    double pos_acc = 0, neg_acc = 0, precision = 0, recall = 0, f1 = 0;
    double auc = 0;
    bool auc_defined = false;
    double threshold = 0.5;
    Confusion counts;
    std::vector<RocPoint> roc;
    std::vector<PrPoint> pr;
};

namespace detail {

inline double safe_div(double num, double den) { return den > 0 ? num / den : 0.0; }

inline std::vector<double> distinct_scores_desc(const std::vector<double>& scores) {
    std::vector<double> s = scores;
    std::sort(s.begin(), s.end(), std::greater<>());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
}

}  // namespace detail

inline EvaluationReport metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                                double threshold = 0.5) {
    EvaluationReport r;
    r.threshold = threshold;
    r.counts = confusion(scores, labels, threshold);
    const Confusion& c = r.counts;
    r.recall = detail::safe_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
    r.pos_acc = r.recall;  // positive-class accuracy is recall by definition
    r.neg_acc = detail::safe_div(static_cast<double>(c.tn), static_cast<double>(c.tn + c.fp));
    r.precision = detail::safe_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
    r.f1 = detail::safe_div(2.0 * r.precision * r.recall, r.precision + r.recall);

    size_t n_pos = 0, n_neg = 0;
    for (int l : labels) (l == 1 ? n_pos : n_neg)++;
    if (n_pos > 0 && n_neg > 0) {
        r.auc = roc_auc(scores, labels);
        r.auc_defined = true;
        for (double thr : detail::distinct_scores_desc(scores)) {
            const Confusion ct = confusion(scores, labels, thr);
            r.roc.push_back({detail::safe_div(static_cast<double>(ct.fp), static_cast<double>(ct.fp + ct.tn)),
                             detail::safe_div(static_cast<double>(ct.tp), static_cast<double>(ct.tp + ct.fn)), thr});
            r.pr.push_back({detail::safe_div(static_cast<double>(ct.tp), static_cast<double>(ct.tp + ct.fn)),
                            detail::safe_div(static_cast<double>(ct.tp), static_cast<double>(ct.tp + ct.fp)), thr});
        }
    }
    return r;
}

// Trapezoidal integration of the ROC curve; used as the cross-check route
// against the rank statistic.
inline double trapezoid_roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    double auc = 0, prev_fpr = 0, prev_tpr = 0;
    for (double thr : detail::distinct_scores_desc(scores)) {
        const Confusion c = confusion(scores, labels, thr);
        const double fpr = detail::safe_div(static_cast<double>(c.fp), static_cast<double>(c.fp + c.tn));
        const double tpr = detail::safe_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
        auc += (fpr - prev_fpr) * 0.5 * (tpr + prev_tpr);
        prev_fpr = fpr;
        prev_tpr = tpr;
    }
    auc += (1.0 - prev_fpr) * 0.5 * (1.0 + prev_tpr);
    return auc;
}

// Sweep all distinct score values as thresholds (prediction = score >= thr);
// ties on F1 resolve toward the higher threshold.
inline std::pair<double, double> best_f1_threshold(const std::vector<double>& scores,
                                                   const std::vector<int>& labels) {
    size_t n_pos = 0, n_neg = 0;
    for (int l : labels) (l == 1 ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0) throw ValidationError("best_f1_threshold: need both classes");
    double best_thr = 0, best_f1 = -1;
    for (double thr : detail::distinct_scores_desc(scores)) {  // descending: first hit wins ties
        const Confusion c = confusion(scores, labels, thr);
        const double p = detail::safe_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
        const double rec = detail::safe_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
        const double f1 = detail::safe_div(2.0 * p * rec, p + rec);
        if (f1 > best_f1) {
            best_f1 = f1;
            best_thr = thr;
        }
    }
    return {best_thr, best_f1};
}

// Aligned text table in Table-2 column order plus per-variant curve sidecars
// (two-column text next to the table file).
inline void emit_table(const std::vector<std::pair<std::string, EvaluationReport>>& reports,
                       const std::filesystem::path& path) {
    if (reports.empty()) throw ValidationError("emit_table: no reports");
    std::ostringstream os;
    auto cell = [](double v, bool defined = true) {
        if (!defined) return std::string("n/a");
        std::ostringstream c;
        c << std::fixed << std::setprecision(3) << v;
        return c.str();
    };
    size_t name_w = 5;
    for (const auto& [name, _] : reports) name_w = std::max(name_w, name.size());
    os << std::left << std::setw(static_cast<int>(name_w) + 2) << "Model"
       << "Pos. Acc  Neg. Acc  Precision  Recall  F1     AUC\n";
    for (const auto& [name, r] : reports) {
        os << std::left << std::setw(static_cast<int>(name_w) + 2) << name << std::setw(10) << cell(r.pos_acc)
           << std::setw(10) << cell(r.neg_acc) << std::setw(11) << cell(r.precision) << std::setw(8)
           << cell(r.recall) << std::setw(7) << cell(r.f1) << cell(r.auc, r.auc_defined) << "\n";
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("emit_table: cannot write " + path.string());
    f << os.str();
    const std::filesystem::path dir = path.parent_path();
    for (const auto& [name, r] : reports) {
        std::ofstream roc(dir / (name + "_roc.txt"), std::ios::trunc);
        roc << "# fpr tpr threshold\n";
        for (const auto& p : r.roc) roc << p.fpr << " " << p.tpr << " " << p.threshold << "\n";
        std::ofstream pr(dir / (name + "_pr.txt"), std::ios::trunc);
        pr << "# recall precision threshold\n";
        for (const auto& p : r.pr) pr << p.recall << " " << p.precision << " " << p.threshold << "\n";
    }
}

inline std::string report_line(const EvaluationReport& r) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << "pos_acc=" << r.pos_acc << " neg_acc=" << r.neg_acc
       << " precision=" << r.precision << " recall=" << r.recall << " f1=" << r.f1
       << " auc=" << (r.auc_defined ? std::to_string(r.auc) : std::string("n/a")) << " thr=" << r.threshold;
    return os.str();
}

}  // namespace cussp::evaluation
