#pragma once

// Demographics-balanced cohort selection: equal counts in every cell of the
// cross product of one or more groupings, drawn without replacement.

#include <algorithm>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "agentaudit/core.hpp"
#include "agentaudit/stats.hpp"

namespace agentaudit {

struct MetadataRow {
    std::string id;
    std::map<std::string, AttributeValue> attributes;
};

struct BalancedSample {
    std::vector<std::string> ids;  // grouped by cell (cells in label order), sorted by id within a cell
    std::vector<std::vector<std::string>> cells;  // label tuple per cell
    std::size_t per_cell = 0;
    std::size_t n_unmappable = 0;
};

/// Picks n_total / (number of cells) ids from every cell. A cell's candidates
/// are sorted by id before a seeded partial shuffle, so the result depends
/// only on the metadata content and the seed.
inline BalancedSample balanced_sample(const std::vector<MetadataRow>& metadata, const std::vector<Grouping>& strata,
                                      std::size_t n_total, std::uint64_t seed) {
    if (strata.empty()) throw InputError("balanced sampling needs at least one grouping");
    std::size_t n_cells = 1;
    for (const auto& g : strata) n_cells *= g.size();
    if (n_total == 0 || n_total % n_cells != 0) {
        throw InputError("n_total " + std::to_string(n_total) + " is not a positive multiple of the " +
                         std::to_string(n_cells) + " strata cells");
    }

    BalancedSample out;
    out.per_cell = n_total / n_cells;
    std::vector<std::vector<std::string>> members(n_cells);
    for (const auto& row : metadata) {
        std::size_t cell = 0;
        bool ok = true;
        for (const auto& g : strata) {
            auto a = assign_group(row.attributes, g);
            if (!a) {
                ok = false;
                break;
            }
            cell = cell * g.size() + *g.index_of(*a.label);
        }
        if (ok) {
            members[cell].push_back(row.id);
        } else {
            ++out.n_unmappable;
        }
    }

    auto cell_labels = [&](std::size_t cell) {
        std::vector<std::string> labels(strata.size());
        for (std::size_t s = strata.size(); s-- > 0;) {
            labels[s] = strata[s].labels()[cell % strata[s].size()];
            cell /= strata[s].size();
        }
        return labels;
    };

    std::vector<std::string> deficits;
    for (std::size_t c = 0; c < n_cells; ++c) {
        auto& m = members[c];
        std::sort(m.begin(), m.end());
        if (std::adjacent_find(m.begin(), m.end()) != m.end()) throw InputError("duplicate id in metadata: " + *std::adjacent_find(m.begin(), m.end()));
        if (m.size() < out.per_cell) {
            deficits.push_back(detail::join(cell_labels(c), " x ") + " (has " + std::to_string(m.size()) + ", short by " +
                               std::to_string(out.per_cell - m.size()) + ")");
        }
    }
    if (!deficits.empty()) throw InfeasibleError("undersized strata cells: " + detail::join(deficits, "; "));

    for (std::size_t c = 0; c < n_cells; ++c) {
        auto& m = members[c];
        RandomStream rng(seed, c);
        for (std::size_t k = 0; k < out.per_cell; ++k) {
            std::size_t j = k + rng.uniform_index(m.size() - k);
            std::swap(m[k], m[j]);
        }
        std::vector<std::string> picked(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(out.per_cell));
        std::sort(picked.begin(), picked.end());
        out.ids.insert(out.ids.end(), picked.begin(), picked.end());
        out.cells.push_back(cell_labels(c));
    }
    return out;
}

/// CSV with a header row; the column named `id_column` holds ids and every
/// other column is an attribute. Cells that parse as numbers become numbers.
/// Double-quoted fields may contain commas and doubled quotes.
inline std::vector<MetadataRow> parse_metadata_csv(std::istream& in, const std::string& id_column = "id") {
    auto split = [](const std::string& line) {
        std::vector<std::string> fields;
        std::string cur;
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            char c = line[i];
            if (quoted) {
                if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else if (c == '"') {
                    quoted = false;
                } else {
                    cur += c;
                }
            } else if (c == '"') {
                quoted = true;
            } else if (c == ',') {
                fields.push_back(std::move(cur));
                cur.clear();
            } else {
                cur += c;
            }
        }
        fields.push_back(std::move(cur));
        return fields;
    };

    std::string line;
    std::vector<std::string> header;
    std::vector<MetadataRow> rows;
    std::size_t line_no = 0;
    std::ptrdiff_t id_pos = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::trim(line).empty()) continue;
        auto fields = split(line);
        if (header.empty()) {
            header = fields;
            for (auto& h : header) h = detail::trim(h);
            auto it = std::find(header.begin(), header.end(), id_column);
            if (it == header.end()) throw InputError("metadata CSV has no '" + id_column + "' column");
            id_pos = it - header.begin();
            continue;
        }
        if (fields.size() != header.size()) {
            throw InputError("metadata CSV line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                             " fields, got " + std::to_string(fields.size()));
        }
        MetadataRow row;
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (static_cast<std::ptrdiff_t>(i) == id_pos) {
                row.id = detail::trim(fields[i]);
            } else if (auto v = detail::parse_double(fields[i])) {
                row.attributes[header[i]] = *v;
            } else if (!detail::trim(fields[i]).empty()) {
                row.attributes[header[i]] = detail::trim(fields[i]);
            }
        }
        rows.push_back(std::move(row));
    }
    if (header.empty()) throw InputError("metadata CSV is empty");
    return rows;
}

inline std::vector<MetadataRow> load_metadata_csv(const std::string& path, const std::string& id_column = "id") {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read metadata file: " + path);
    return parse_metadata_csv(in, id_column);
}

inline std::vector<MetadataRow> metadata_from_instances(const std::vector<Instance>& instances) {
    std::vector<MetadataRow> rows;
    for (const auto& inst : instances) rows.push_back({inst.id, inst.attributes});
    return rows;
}

}  // namespace agentaudit
