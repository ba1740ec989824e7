#include "dcm/io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace dcm {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    std::size_t b = 0, e = cell.size();
    while (b < e && std::isspace(static_cast<unsigned char>(cell[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(cell[e - 1]))) --e;
    cells.push_back(cell.substr(b, e - b));
  }
  return cells;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end && *end == '\0';
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(split_csv_line(line));
  }
  if (rows.empty()) throw std::runtime_error(path + " is empty");
  return rows;
}

// Header rows are detected by failing to parse as numbers.
bool is_numeric_row(const std::vector<std::string>& row) {
  double v;
  for (const auto& cell : row) {
    if (!parse_double(cell, v)) return false;
  }
  return true;
}

std::vector<std::vector<double>> read_numeric_csv(const std::string& path) {
  auto rows = read_csv(path);
  std::size_t first = is_numeric_row(rows.front()) ? 0 : 1;
  if (first == 1 && rows.size() == 1) {
    throw std::runtime_error(path + " has a header but no data");
  }
  std::vector<std::vector<double>> out;
  for (std::size_t r = first; r < rows.size(); ++r) {
    std::vector<double> values(rows[r].size());
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      if (!parse_double(rows[r][c], values[c])) {
        throw std::runtime_error(path + ": bad number '" + rows[r][c] + "'");
      }
    }
    if (values.size() != rows[first].size()) {
      throw std::runtime_error(path + ": ragged rows");
    }
    out.push_back(std::move(values));
  }
  return out;
}

std::uint8_t to_binary(double v, const std::string& path) {
  if (v == 0.0) return 0;
  if (v == 1.0) return 1;
  throw std::runtime_error(path + ": entries must be 0/1");
}

}  // namespace

std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

QMatrix read_qmatrix_csv(const std::string& path) {
  const auto cells = read_numeric_csv(path);
  std::vector<std::vector<std::uint8_t>> rows;
  for (const auto& row : cells) {
    std::vector<std::uint8_t> bits;
    for (double v : row) bits.push_back(to_binary(v, path));
    rows.push_back(std::move(bits));
  }
  return QMatrix(std::move(rows));
}

void write_qmatrix_csv(const std::string& path, const QMatrix& qmatrix) {
  std::string out;
  for (int i = 0; i < qmatrix.n_items(); ++i) {
    const auto row = qmatrix.row(i);
    for (int a = 0; a < qmatrix.n_attributes(); ++a) {
      if (a) out += ',';
      out += row[a] ? '1' : '0';
    }
    out += '\n';
  }
  write_text_file(path, out);
}

ResponseMatrix read_responses_csv(const std::string& path) {
  const auto cells = read_numeric_csv(path);
  ResponseMatrix data;
  data.n_examinees = static_cast<int>(cells.size());
  data.n_items = static_cast<int>(cells.front().size());
  data.data.reserve(cells.size() * cells.front().size());
  for (const auto& row : cells) {
    for (double v : row) data.data.push_back(to_binary(v, path));
  }
  return data;
}

void write_responses_csv(const std::string& path, const ResponseMatrix& data) {
  std::string out;
  for (int e = 0; e < data.n_examinees; ++e) {
    for (int i = 0; i < data.n_items; ++i) {
      if (i) out += ',';
      out += data.at(e, i) ? '1' : '0';
    }
    out += '\n';
  }
  write_text_file(path, out);
}

LogLikMatrix read_loglik_csv(const std::string& path) {
  const auto cells = read_numeric_csv(path);
  LogLikMatrix ll;
  ll.n_examinees = static_cast<int>(cells.size());
  ll.n_draws = static_cast<int>(cells.front().size());
  ll.values.reserve(cells.size() * cells.front().size());
  for (const auto& row : cells) {
    for (double v : row) ll.values.push_back(v);
  }
  return ll;
}

void write_loglik_csv(const std::string& path, const LogLikMatrix& ll) {
  std::string out;
  for (int e = 0; e < ll.n_examinees; ++e) {
    for (int s = 0; s < ll.n_draws; ++s) {
      if (s) out += ',';
      out += format_full(ll.at(e, s));
    }
    out += '\n';
  }
  write_text_file(path, out);
}

std::string item_params_to_json(const std::vector<ItemParameters>& params) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& item : params) {
    nlohmann::json effects = nlohmann::json::object();
    for (const auto& [key, value] : item.effects) effects[key.label()] = value;
    arr.push_back({{"intercept", item.intercept}, {"effects", effects}});
  }
  return arr.dump(2);
}

std::vector<ItemParameters> item_params_from_json(const std::string& text) {
  const auto arr = nlohmann::json::parse(text);
  std::vector<ItemParameters> params;
  for (const auto& entry : arr) {
    ItemParameters item;
    item.intercept = entry.at("intercept").get<double>();
    for (const auto& [label, value] : entry.at("effects").items()) {
      const auto key = EffectKey::parse(label);
      if (!key) throw std::runtime_error("bad effect key '" + label + "'");
      item.effects.emplace_back(*key, value.get<double>());
    }
    std::sort(item.effects.begin(), item.effects.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    params.push_back(std::move(item));
  }
  return params;
}

void write_truth_json(const std::string& path, const ResponseMatrix& data,
                      const SimCondition& condition, ModelVariant variant,
                      std::uint64_t seed) {
  nlohmann::json truth;
  truth["condition"] = {{"generating_variant", std::string(to_string(variant))},
                        {"n_examinees", condition.n_examinees},
                        {"quality", std::string(to_string(condition.quality))},
                        {"prior", std::string(to_string(condition.prior_level))}};
  truth["seed"] = seed;
  nlohmann::json profiles = nlohmann::json::array();
  for (const auto& p : data.true_profiles) {
    profiles.push_back(p.to_index());
  }
  truth["profile_class"] = profiles;
  truth["item_parameters"] = nlohmann::json::parse(item_params_to_json(data.true_params));
  write_text_file(path, truth.dump(2) + "\n");
}

void write_draws_csv(const std::string& path, const FitResult& fit) {
  std::string out = "chain,iteration,parameter,value\n";
  for (std::size_t c = 0; c < fit.chains.size(); ++c) {
    const auto& chain = fit.chains[c];
    for (int s = 0; s < chain.n_draws; ++s) {
      const auto row = chain.draw(s);
      for (int k = 0; k < chain.n_parameters; ++k) {
        out += std::to_string(c) + ',' + std::to_string(s) + ',' +
               fit.layout.parameter_name(k) + ',' + format_full(row[k]) + '\n';
      }
    }
  }
  write_text_file(path, out);
}

std::string fit_report_to_json(const FitIndexReport& report) {
  nlohmann::json j;
  j["dic"] = report.dic;
  j["p_dic"] = report.p_dic;
  j["lpd_hat"] = report.lpd_hat;
  j["elpd_waic"] = report.elpd_waic;
  j["p_waic"] = report.p_waic;
  j["waic"] = report.waic;
  j["elpd_psis_loo"] = report.elpd_psis_loo;
  j["p_loo"] = report.p_loo;
  j["khat_max"] = report.max_khat;
  j["khat_count_above_0.7"] = report.n_khat_above_07;
  return j.dump(2);
}

void write_pointwise_csv(const std::string& path, const FitIndexReport& report) {
  std::string out = "examinee,lpd,elpd_waic_i,elpd_loo_i,khat\n";
  for (std::size_t e = 0; e < report.pointwise_lpd.size(); ++e) {
    out += std::to_string(e) + ',' + format_full(report.pointwise_lpd[e]) + ',' +
           format_full(report.pointwise_elpd_waic[e]) + ',' +
           format_full(report.pointwise_elpd_loo[e]) + ',' +
           format_full(report.pointwise_khat[e]) + '\n';
  }
  write_text_file(path, out);
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace dcm
