#pragma once

#include "sbtd/condition.hpp"
#include "sbtd/experiments.hpp"
#include "sbtd/model.hpp"

#include <json.hpp>

#include <string>

namespace sbtd {

/// Raised on malformed decomposition documents; the message names the
/// offending term/field.
struct DocumentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Decomposition document, schema_version 1:
/// { "schema_version": 1, "dims": [...],
///   "terms": [ { "structure": "full"|"rank1",
///                "factors": [ row-major 2-D arrays, one per mode ],
///                "core": { "dims": [...], "data": [ linear order ] } } ] }
nlohmann::json sbtd_to_json(const Sbtd& s);
Sbtd sbtd_from_json(const nlohmann::json& doc);

/// Atomic write (temp file + rename); never leaves partial output behind.
void save_decomposition(const std::string& path, const Sbtd& s);
Sbtd load_decomposition(const std::string& path);

/// kappa serializes as null when infinite; ill_posed carries the flag.
nlohmann::json report_to_json(const ConditionReport& r);
ConditionReport report_from_json(const nlohmann::json& j);

nlohmann::json probe_to_json(const ProbeResult& r);
ProbeResult probe_from_json(const nlohmann::json& j);

/// Human-readable report, 17 significant digits.
std::string format_report_text(const ConditionReport& r);

std::string format_double(double v);

}  // namespace sbtd
