#pragma once

#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "poisfact/evaluator.hpp"
#include "poisfact/sparse_data.hpp"

namespace poisfact {

/// `key=value` lines; an undefined correlation prints as `nan`.
inline std::string to_key_value(const EvalReport& r) {
  std::ostringstream out;
  out << "p_at_k=" << detail::format_real(r.p_at_k) << '\n'
      << "auc=" << detail::format_real(r.auc) << '\n'
      << "pearson_rho=" << (r.pearson_rho ? detail::format_real(*r.pearson_rho) : "nan") << '\n'
      << "test_loglik=" << detail::format_real(r.test_loglik) << '\n'
      << "users_evaluated=" << r.users_evaluated << '\n'
      << "users_skipped=" << r.users_skipped << '\n';
  return out.str();
}

/// One flat JSON object; an undefined correlation is `null`.
inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["p_at_k"] = r.p_at_k;
  j["auc"] = r.auc;
  j["pearson_rho"] = r.pearson_rho ? nlohmann::json(*r.pearson_rho) : nlohmann::json(nullptr);
  j["test_loglik"] = r.test_loglik;
  j["users_evaluated"] = r.users_evaluated;
  j["users_skipped"] = r.users_skipped;
  return j;
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.p_at_k = j.at("p_at_k").get<double>();
  r.auc = j.at("auc").get<double>();
  if (!j.at("pearson_rho").is_null()) r.pearson_rho = j.at("pearson_rho").get<double>();
  r.test_loglik = j.at("test_loglik").get<double>();
  r.users_evaluated = j.at("users_evaluated").get<std::size_t>();
  r.users_skipped = j.at("users_skipped").get<std::size_t>();
  return r;
}

}  // namespace poisfact
