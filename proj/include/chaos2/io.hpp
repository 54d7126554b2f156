#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "chaos2/chaos.hpp"
#include "chaos2/error.hpp"
#include "chaos2/linalg.hpp"

namespace chaos2 {

using Json = nlohmann::ordered_json;

[[nodiscard]] inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::InputParse, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

[[nodiscard]] inline Json parse_json(const std::string& text, const std::string& origin = "input") {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw Error(ErrorKind::InputParse, origin + ": " + e.what());
    }
}

[[nodiscard]] inline Json read_json(const std::filesystem::path& path) { return parse_json(read_text(path), path.string()); }

// Write to a sibling temporary and rename, so readers never see a partial file.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::InputParse, "cannot write " + tmp.string());
        out << content;
        if (!out.flush()) throw Error(ErrorKind::InputParse, "short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorKind::InputParse, "rename to " + path.string() + " failed: " + ec.message());
}

/// Shortest decimal text that reads back to the same double.
[[nodiscard]] inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace detail {

inline double number_at(const Json& j, const std::string& where) {
    if (!j.is_number()) throw Error(ErrorKind::InputParse, where + ": expected a number");
    return j.get<double>();
}

inline Matrix rows_to_matrix(const Json& rows, const std::string& where) {
    if (!rows.is_array() || rows.empty()) throw Error(ErrorKind::InputParse, where + ": expected a non-empty array of rows");
    const auto r = static_cast<Eigen::Index>(rows.size());
    if (!rows[0].is_array() || rows[0].empty()) throw Error(ErrorKind::InputParse, where + ": rows must be arrays");
    const auto c = static_cast<Eigen::Index>(rows[0].size());
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        const auto& row = rows[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != c)
            throw Error(ErrorKind::DimensionMismatch, where + ": ragged row " + std::to_string(i));
        for (Eigen::Index j = 0; j < c; ++j)
            m(i, j) = number_at(row[static_cast<std::size_t>(j)], where);
    }
    return m;
}

}  // namespace detail

[[nodiscard]] inline Json matrix_to_json(const Matrix& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

/// {"dim": d, "rows": [[...], ...]}; a bare array of rows is also accepted.
[[nodiscard]] inline Matrix matrix_from_json(const Json& j, const std::string& where = "matrix") {
    if (j.is_array()) return detail::rows_to_matrix(j, where);
    if (!j.is_object() || !j.contains("rows")) throw Error(ErrorKind::InputParse, where + ": missing \"rows\"");
    Matrix m = detail::rows_to_matrix(j.at("rows"), where);
    if (j.contains("dim")) {
        const auto d = j.at("dim").get<long long>();
        if (m.rows() != d || m.cols() != d)
            throw Error(ErrorKind::DimensionMismatch, where + ": \"dim\" is " + std::to_string(d) + " but rows are " +
                                                          std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    return m;
}

[[nodiscard]] inline Json element_to_json(const ChaosElement& f) {
    return Json{{"dim", f.dim()}, {"rows", matrix_to_json(f.matrix())}};
}

[[nodiscard]] inline ChaosElement element_from_json(const Json& j) { return from_matrix(matrix_from_json(j)); }

[[nodiscard]] inline Json vector_to_json(const ChaosVector& v) {
    Json elems = Json::array();
    for (const auto& f : v.elements()) elems.push_back(element_to_json(f));
    return Json{{"dim", v.dim()}, {"elements", elems}};
}

/// {"dim": d, "elements": [matrix, ...]}. A single matrix document is read as k = 1.
[[nodiscard]] inline ChaosVector vector_from_json(const Json& j) {
    if (j.is_object() && j.contains("rows") && !j.contains("elements")) return ChaosVector({element_from_json(j)});
    if (!j.is_object() || !j.contains("elements") || !j.at("elements").is_array())
        throw Error(ErrorKind::InputParse, "vector: missing \"elements\" array");
    std::vector<ChaosElement> elems;
    std::size_t idx = 0;
    for (const auto& e : j.at("elements"))
        elems.push_back(from_matrix(matrix_from_json(e, "elements[" + std::to_string(idx++) + "]")));
    if (elems.empty()) throw Error(ErrorKind::InputParse, "vector: \"elements\" is empty");
    ChaosVector v(std::move(elems));
    if (j.contains("dim") && j.at("dim").get<long long>() != v.dim())
        throw Error(ErrorKind::DimensionMismatch, "vector: \"dim\" disagrees with the element matrices");
    return v;
}

[[nodiscard]] inline ChaosVector read_vector(const std::filesystem::path& path) { return vector_from_json(read_json(path)); }

/// Header F1,...,Fk then one row per sample, 17 significant digits.
[[nodiscard]] inline std::string batch_to_csv(const Matrix& values) {
    std::string out;
    out.reserve(static_cast<std::size_t>(values.size()) * 24 + 16);
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
        if (j) out += ',';
        out += 'F';
        out += std::to_string(j + 1);
    }
    out += '\n';
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        for (Eigen::Index j = 0; j < values.cols(); ++j) {
            if (j) out += ',';
            out += format_double(values(i, j));
        }
        out += '\n';
    }
    return out;
}

[[nodiscard]] inline std::string batch_to_csv(const SampleBatch& b) { return batch_to_csv(b.values); }

[[nodiscard]] inline Matrix batch_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.empty() || line[0] != 'F')
        throw Error(ErrorKind::InputParse, "CSV batch: missing F1,...,Fk header");
    const auto k = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',') + 1);
    std::vector<double> data;
    Eigen::Index rows = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream cells(line);
        std::string cell;
        Eigen::Index cols = 0;
        while (std::getline(cells, cell, ',')) {
            try {
                std::size_t used = 0;
                data.push_back(std::stod(cell, &used));
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw Error(ErrorKind::InputParse, "CSV batch: bad number '" + cell + "' on data row " + std::to_string(rows + 1));
            }
            ++cols;
        }
        if (cols != k) throw Error(ErrorKind::DimensionMismatch, "CSV batch: row " + std::to_string(rows + 1) + " has " +
                                                                    std::to_string(cols) + " fields, expected " + std::to_string(k));
        ++rows;
    }
    if (rows == 0) throw Error(ErrorKind::EmptyBatch, "CSV batch has no data rows");
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(data.data(), rows, k);
}

[[nodiscard]] inline Json vec_to_json(const Vector& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

}  // namespace chaos2
