#ifndef DCM_IO_HPP
#define DCM_IO_HPP

#include <string>
#include <vector>

#include "dcm/indices.hpp"
#include "dcm/model.hpp"
#include "dcm/sampler.hpp"
#include "dcm/simulate.hpp"

namespace dcm {

// Deterministic double formatting: full round-trip precision for data
// files, trimmed fixed precision for report tables.
std::string format_full(double v);
std::string format_short(double v);

// Q-matrix: plain-text CSV, one row per item, columns = attributes,
// entries 0/1, optional header.
QMatrix read_qmatrix_csv(const std::string& path);
void write_qmatrix_csv(const std::string& path, const QMatrix& qmatrix);

// Responses: rows = examinees, cols = items, entries 0/1, optional header.
ResponseMatrix read_responses_csv(const std::string& path);
void write_responses_csv(const std::string& path, const ResponseMatrix& data);

// N x S pointwise log-likelihood matrix, one examinee per row.
LogLikMatrix read_loglik_csv(const std::string& path);
void write_loglik_csv(const std::string& path, const LogLikMatrix& ll);

// Item parameters: JSON array of {intercept, effects: {"2": ..., "2,3": ...}}.
std::string item_params_to_json(const std::vector<ItemParameters>& params);
std::vector<ItemParameters> item_params_from_json(const std::string& text);

// Truth sidecar for a generated dataset (profiles, parameters, condition,
// seed).
void write_truth_json(const std::string& path, const ResponseMatrix& data,
                      const SimCondition& condition, ModelVariant variant,
                      std::uint64_t seed);

// Posterior draws as a flat CSV: chain, iteration, parameter, value.
void write_draws_csv(const std::string& path, const FitResult& fit);

// FitIndexReport as one JSON object; pointwise vectors as CSV
// (examinee, lpd, elpd_waic_i, elpd_loo_i, khat).
std::string fit_report_to_json(const FitIndexReport& report);
void write_pointwise_csv(const std::string& path, const FitIndexReport& report);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace dcm

#endif  // DCM_IO_HPP
