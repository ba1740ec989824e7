#ifndef DCM_STUDY_HPP
#define DCM_STUDY_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dcm/indices.hpp"
#include "dcm/metrics.hpp"
#include "dcm/sampler.hpp"
#include "dcm/simulate.hpp"

namespace dcm {

enum class FitIndexKind { Dic, Waic, PsisLoo };

std::string_view to_string(FitIndexKind k);

struct StudyConfig {
  std::vector<SimCondition> conditions;
  std::vector<ModelVariant> estimation_variants = {ModelVariant::Lcdm,
                                                   ModelVariant::Dina,
                                                   ModelVariant::Crum};
  int replications = 5;
  std::uint64_t study_seed = 20260809;
  ChainConfig chains;
  TrueParamPolicy generator;
  std::string output_dir = "out";
  int jobs = 1;

  static StudyConfig desk_preset();   // 5 reps, N in {500, 1000}
  static StudyConfig paper_preset();  // 25 reps, N in {500, 1000, 2000}

  std::string to_json() const;
  static StudyConfig from_json(const std::string& text);
  std::uint64_t config_hash() const;

  void validate() const;
};

// Selection per index with parsimony tie-breaking: argmin DIC, argmin WAIC,
// argmax elpd PSIS-LOO; exact ties go to the variant with fewer parameters
// (DINA, then CRUM, then LCDM). Non-finite candidates are excluded and
// reported.
struct SelectionOutcome {
  ModelVariant best;
  std::vector<ModelVariant> excluded;
};

SelectionOutcome select_best(const std::vector<std::pair<ModelVariant, double>>& values,
                             FitIndexKind kind);

struct VariantFitRecord {
  ModelVariant variant = ModelVariant::Lcdm;
  bool converged = false;
  double max_rhat = 0.0;
  int extensions_used = 0;
  FitIndexReport indices;
};

struct RunArtifact {
  SimCondition condition;
  int replication = 0;
  std::uint64_t seed = 0;
  std::vector<VariantFitRecord> fits;
  std::map<FitIndexKind, ModelVariant> selected;
  std::vector<std::string> notes;
  bool has_recovery = false;
  RecoveryReport recovery;
  bool has_classification = false;
  ClassificationReport classification;            // MAP calls vs truth
  ClassificationReport classification_agreement;  // posterior draw agreement

  std::string to_json() const;
};

// Selection counts per (condition, index, estimation variant); counts per
// (condition, index) sum to the replication count.
struct SelectionTable {
  struct Row {
    std::string condition_id;
    ModelVariant estimator;
    int dic_count = 0;
    int waic_count = 0;
    int psisloo_count = 0;
  };
  std::vector<Row> rows;
};

struct StudyResult {
  std::vector<RunArtifact> artifacts;
  SelectionTable table;
};

// Generate -> fit every estimation variant -> indices -> metrics ->
// selection for one replication.
RunArtifact run_replication(const SimCondition& condition, int replication,
                            const StudyConfig& config, const QMatrix& qmatrix);

StudyResult run_study(const StudyConfig& config);

SelectionTable tabulate_selections(const std::vector<RunArtifact>& artifacts,
                                   const StudyConfig& config);

// Writes selection_table.csv, indices.csv, recovery.csv, classification.csv,
// per-condition summaries, and manifest.json into the output directory.
// Byte-identical across reruns with the same config and seed.
void emit_reports(const StudyResult& result, const StudyConfig& config,
                  const std::string& output_dir);

}  // namespace dcm

#endif  // DCM_STUDY_HPP
