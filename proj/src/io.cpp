#include "sbtd/io.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace sbtd {

namespace {

using nlohmann::json;

constexpr int kSchemaVersion = 1;

[[noreturn]] void bad(const std::string& where, const std::string& what) {
    throw DocumentError(where + ": " + what);
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) bad(where, "expected a non-empty 2-D array");
    const size_t rows = j.size();
    if (!j[0].is_array() || j[0].empty()) bad(where, "expected non-empty rows");
    const size_t cols = j[0].size();
    Eigen::MatrixXd m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (size_t i = 0; i < rows; ++i) {
        if (!j[i].is_array() || j[i].size() != cols) bad(where, "ragged rows");
        for (size_t c = 0; c < cols; ++c) {
            if (!j[i][c].is_number()) bad(where, "non-numeric entry");
            m(static_cast<Index>(i), static_cast<Index>(c)) = j[i][c].get<double>();
        }
    }
    return m;
}

std::vector<Index> dims_from_json(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) bad(where, "expected a non-empty integer array");
    std::vector<Index> dims;
    for (const auto& v : j) {
        if (!v.is_number_integer() || v.get<std::int64_t>() < 1)
            bad(where, "dimensions must be positive integers");
        dims.push_back(v.get<Index>());
    }
    return dims;
}

}  // namespace

json sbtd_to_json(const Sbtd& s) {
    json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["dims"] = s.ambient_dims;
    json terms = json::array();
    for (const TuckerTerm& term : s.terms) {
        json t;
        t["structure"] = term.structure == CoreStructure::Rank1 ? "rank1" : "full";
        json factors = json::array();
        for (const auto& u : term.factors) factors.push_back(matrix_to_json(u));
        t["factors"] = std::move(factors);
        t["core"] = {{"dims", term.core.dims()}, {"data", term.core.data()}};
        terms.push_back(std::move(t));
    }
    doc["terms"] = std::move(terms);
    return doc;
}

Sbtd sbtd_from_json(const json& doc) {
    if (!doc.is_object()) bad("document", "expected a JSON object");
    if (!doc.contains("schema_version") || !doc["schema_version"].is_number_integer())
        bad("schema_version", "missing or not an integer");
    if (doc["schema_version"].get<int>() != kSchemaVersion)
        bad("schema_version", "unsupported version");
    if (!doc.contains("dims")) bad("dims", "missing");
    Sbtd s;
    s.ambient_dims = dims_from_json(doc["dims"], "dims");
    if (!doc.contains("terms") || !doc["terms"].is_array() || doc["terms"].empty())
        bad("terms", "expected a non-empty array");
    const Index D = s.order();
    for (size_t r = 0; r < doc["terms"].size(); ++r) {
        std::ostringstream wh;
        wh << "terms[" << r << "]";
        const std::string where = wh.str();
        const json& tj = doc["terms"][r];
        if (!tj.is_object()) bad(where, "expected an object");
        TuckerTerm term;
        if (!tj.contains("structure") || !tj["structure"].is_string())
            bad(where + ".structure", "missing or not a string");
        const std::string st = tj["structure"].get<std::string>();
        if (st == "full")
            term.structure = CoreStructure::FullRank;
        else if (st == "rank1")
            term.structure = CoreStructure::Rank1;
        else
            bad(where + ".structure", "must be \"full\" or \"rank1\"");
        if (!tj.contains("factors") || !tj["factors"].is_array() ||
            static_cast<Index>(tj["factors"].size()) != D)
            bad(where + ".factors", "expected one factor matrix per mode");
        if (!tj.contains("core") || !tj["core"].is_object())
            bad(where + ".core", "missing");
        const std::vector<Index> core_dims =
            dims_from_json(tj["core"].contains("dims") ? tj["core"]["dims"] : json(),
                           where + ".core.dims");
        if (static_cast<Index>(core_dims.size()) != D)
            bad(where + ".core.dims", "order does not match ambient dims");
        if (!tj["core"].contains("data") || !tj["core"]["data"].is_array())
            bad(where + ".core.data", "missing numeric array");
        std::vector<double> data;
        for (const auto& v : tj["core"]["data"]) {
            if (!v.is_number()) bad(where + ".core.data", "non-numeric entry");
            data.push_back(v.get<double>());
        }
        Index expected = 1;
        for (Index d : core_dims) expected *= d;
        if (static_cast<Index>(data.size()) != expected)
            bad(where + ".core.data", "length does not match core dims");
        term.core = DenseTensor(core_dims, std::move(data));
        for (Index d = 0; d < D; ++d) {
            std::ostringstream fw;
            fw << where << ".factors[" << d << "]";
            Eigen::MatrixXd u = matrix_from_json(tj["factors"][static_cast<size_t>(d)], fw.str());
            if (u.rows() != s.ambient_dims[static_cast<size_t>(d)])
                bad(fw.str(), "row count does not match dims");
            if (u.cols() != core_dims[static_cast<size_t>(d)])
                bad(fw.str(), "column count does not match core dims");
            term.factors.push_back(std::move(u));
        }
        s.terms.push_back(std::move(term));
    }
    return s;
}

void save_decomposition(const std::string& path, const Sbtd& s) {
    const json doc = sbtd_to_json(s);
    const std::filesystem::path target(path);
    std::filesystem::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("save_decomposition: cannot open " + tmp.string());
        out << doc.dump(2) << "\n";
        if (!out) {
            out.close();
            std::filesystem::remove(tmp);
            throw std::runtime_error("save_decomposition: write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, target);
}

Sbtd load_decomposition(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DocumentError("cannot open " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw DocumentError(std::string("JSON parse error: ") + e.what());
    }
    return sbtd_from_json(doc);
}

json report_to_json(const ConditionReport& r) {
    json j;
    j["kappa"] = std::isinf(r.kappa) ? json(nullptr) : json(r.kappa);
    j["sigma_min"] = r.sigma_min;
    j["method"] = r.method == CondMethod::Direct ? "direct" : "compressed";
    j["ill_posed"] = r.ill_posed;
    j["terracini_rows"] = r.terracini_rows;
    j["terracini_cols"] = r.terracini_cols;
    if (r.compressed_dims) j["compressed_dims"] = *r.compressed_dims;
    j["wall_time_s"] = r.wall_time_s;
    return j;
}

ConditionReport report_from_json(const json& j) {
    ConditionReport r;
    r.kappa = j.at("kappa").is_null() ? std::numeric_limits<double>::infinity()
                                      : j.at("kappa").get<double>();
    r.sigma_min = j.at("sigma_min").get<double>();
    r.method = j.at("method").get<std::string>() == "compressed" ? CondMethod::Compressed
                                                                 : CondMethod::Direct;
    r.ill_posed = j.at("ill_posed").get<bool>();
    r.terracini_rows = j.at("terracini_rows").get<Index>();
    r.terracini_cols = j.at("terracini_cols").get<Index>();
    if (j.contains("compressed_dims"))
        r.compressed_dims = j.at("compressed_dims").get<std::vector<Index>>();
    r.wall_time_s = j.at("wall_time_s").get<double>();
    return r;
}

json probe_to_json(const ProbeResult& r) {
    return {{"samples", r.samples},
            {"max_ratio", r.max_ratio},
            {"mean_ratio", r.mean_ratio},
            {"kappa_ref", r.kappa_ref},
            {"singular_ratio", r.singular_ratio}};
}

ProbeResult probe_from_json(const json& j) {
    ProbeResult r;
    r.samples = j.at("samples").get<Index>();
    r.max_ratio = j.at("max_ratio").get<double>();
    r.mean_ratio = j.at("mean_ratio").get<double>();
    r.kappa_ref = j.at("kappa_ref").get<double>();
    r.singular_ratio = j.at("singular_ratio").get<double>();
    return r;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string format_report_text(const ConditionReport& r) {
    std::ostringstream os;
    os << "method: " << (r.method == CondMethod::Direct ? "direct" : "compressed") << "\n";
    os << "kappa: " << (std::isinf(r.kappa) ? "inf" : format_double(r.kappa)) << "\n";
    os << "sigma_min: " << format_double(r.sigma_min) << "\n";
    os << "ill_posed: " << (r.ill_posed ? "true" : "false") << "\n";
    os << "terracini_shape: " << r.terracini_rows << " x " << r.terracini_cols << "\n";
    if (r.compressed_dims) {
        os << "compressed_dims:";
        for (Index d : *r.compressed_dims) os << " " << d;
        os << "\n";
    }
    os << "wall_time_s: " << format_double(r.wall_time_s) << "\n";
    return os.str();
}

}  // namespace sbtd
