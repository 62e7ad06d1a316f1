#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cussp/common.hpp"

namespace cussp::io {

enum class Label { MR, NonMR, Unlabeled };

inline std::string label_to_string(Label l) {
    switch (l) {
        case Label::MR: return "MR";
        case Label::NonMR: return "nonMR";
        case Label::Unlabeled: return "unlabeled";
    }
    throw ValidationError("bad label enum");
}

inline Label label_from_string(const std::string& s) {
    if (s == "MR") return Label::MR;
    if (s == "nonMR") return Label::NonMR;
    if (s == "unlabeled") return Label::Unlabeled;
    throw ValidationError("unknown label '" + s + "' (expected MR|nonMR|unlabeled)");
}

struct ManifestEntry {
    std::string sample_id;
    std::map<std::string, std::filesystem::path> view_paths;  // view tag -> container file
    Label label = Label::Unlabeled;
    std::optional<double> bsa_m2;
};

struct LabelCounts {
    size_t mr = 0, non_mr = 0, unlabeled = 0;
    size_t labeled() const { return mr + non_mr; }
};

// Line-oriented text table, one sample per line:
//   id<TAB>view=path;view=path<TAB>label<TAB>bsa
// bsa is a float in m^2 or "-" when absent.
struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::filesystem::path base_dir;  // relative paths resolve against this

    LabelCounts counts() const {
        LabelCounts c;
        for (const auto& e : entries) {
            if (e.label == Label::MR) ++c.mr;
            else if (e.label == Label::NonMR) ++c.non_mr;
            else ++c.unlabeled;
        }
        return c;
    }

    const ManifestEntry& entry(const std::string& id) const {
        for (const auto& e : entries)
            if (e.sample_id == id) return e;
        throw ValidationError("manifest: no sample with id '" + id + "'");
    }

    std::filesystem::path resolve(const std::filesystem::path& p) const {
        return p.is_absolute() ? p : base_dir / p;
    }
};

inline DatasetManifest parse_manifest_text(std::istream& in, const std::filesystem::path& base_dir) {
    DatasetManifest m;
    m.base_dir = base_dir;
    std::set<std::string> seen_ids;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cols;
        {
            std::stringstream ss(line);
            std::string col;
            while (std::getline(ss, col, '\t')) cols.push_back(col);
        }
        if (cols.size() != 4) throw ParseError("expected 4 tab-separated columns, got " + std::to_string(cols.size()), line_no);
        ManifestEntry e;
        e.sample_id = cols[0];
        if (e.sample_id.empty()) throw ParseError("empty sample id", line_no);
        if (!seen_ids.insert(e.sample_id).second)
            throw ParseError("duplicate sample id '" + e.sample_id + "'", line_no);
        std::stringstream vs(cols[1]);
        std::string pair;
        while (std::getline(vs, pair, ';')) {
            const size_t eq = pair.find('=');
            if (eq == std::string::npos) throw ParseError("view column entry '" + pair + "' is not view=path", line_no);
            e.view_paths[pair.substr(0, eq)] = pair.substr(eq + 1);
        }
        if (e.view_paths.empty()) throw ParseError("no view paths", line_no);
        try {
            e.label = label_from_string(cols[2]);
        } catch (const ValidationError& err) {
            throw ParseError(err.what(), line_no);
        }
        if (cols[3] != "-") {
            try {
                e.bsa_m2 = std::stod(cols[3]);
            } catch (const std::exception&) {
                throw ParseError("bad bsa value '" + cols[3] + "'", line_no);
            }
            if (*e.bsa_m2 <= 0) throw ParseError("bsa must be positive", line_no);
        }
        m.entries.push_back(std::move(e));
    }
    if (m.entries.empty()) throw ParseError("no entries");
    return m;
}

inline DatasetManifest load_manifest(const std::filesystem::path& path, bool check_paths = true) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open manifest " + path.string());
    DatasetManifest m = parse_manifest_text(f, path.parent_path());
    if (check_paths) {
        std::vector<std::string> missing;
        for (const auto& e : m.entries)
            for (const auto& [view, p] : e.view_paths)
                if (!std::filesystem::exists(m.resolve(p)))
                    missing.push_back(e.sample_id + ":" + view + " -> " + m.resolve(p).string());
        if (!missing.empty()) {
            std::string msg = "manifest references missing files:";
            for (const auto& s : missing) msg += "\n  " + s;
            throw ValidationError(msg);
        }
    }
    return m;
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write manifest " + path.string());
    for (const auto& e : m.entries) {
        f << e.sample_id << '\t';
        bool first = true;
        for (const auto& [view, p] : e.view_paths) {
            if (!first) f << ';';
            f << view << '=' << p.string();
            first = false;
        }
        f << '\t' << label_to_string(e.label) << '\t';
        if (e.bsa_m2) f << *e.bsa_m2;
        else f << '-';
        f << '\n';
    }
    if (!f) throw IoError("manifest write failed: " + path.string());
}

}  // namespace cussp::io
