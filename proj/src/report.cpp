#include "headprobe/report.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <memory>
#include <sstream>

#include <openssl/evp.h>

#include "headprobe/error.hpp"

#ifndef HEADPROBE_VERSION
#define HEADPROBE_VERSION "0.0.0"
#endif

namespace headprobe {

const char* software_version() { return HEADPROBE_VERSION; }

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

Json number(double v) {
  // JSON has no NaN or infinity; keep them readable as strings.
  if (std::isfinite(v)) return v;
  return format_double(v);
}

void write_text(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + file.string());
  out << text;
  if (!out) throw ConfigError("write failed for " + file.string());
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

Json to_json(const std::vector<HeadIndex>& heads) {
  Json j = Json::array();
  for (const HeadIndex& h : heads) j.push_back(h.str());
  return j;
}

Json to_json(const SurprisalRecord& r) {
  return {{"set_id", r.set_id}, {"condition", r.condition.label()}, {"surprisal_bits", number(r.verb_surprisal_bits)}};
}

Json to_json(const ConditionStats& s) {
  return {{"condition", s.condition.label()}, {"mean", number(s.mean)}, {"se", number(s.se)}, {"n", s.n}};
}

Json to_json(const std::array<ConditionStats, 4>& summary) {
  Json j = Json::array();
  for (const auto& s : summary) j.push_back(to_json(s));
  return j;
}

Json to_json(const RegressionFit& fit) {
  Json terms = Json::object();
  const auto t = fit.terms();
  for (std::size_t i = 0; i < t.size(); ++i) {
    terms[RegressionFit::kTermNames[i]] = {
        {"estimate", number(t[i]->estimate)}, {"se", number(t[i]->se)}, {"t", number(t[i]->t)}, {"p", number(t[i]->p)}};
  }
  return {{"coding", to_string(fit.coding)},
          {"n_observations", fit.n_observations},
          {"residual_df", fit.residual_df},
          {"terms", terms}};
}

Json to_json(const SensitivityPair& s) {
  return {{"dependent_bits", number(s.dependent_sensitivity_bits)},
          {"distractor_bits", number(s.distractor_sensitivity_bits)}};
}

Json to_json(const AlignmentResult& alignment) {
  Json excluded = Json::array();
  for (const Exclusion& e : alignment.excluded) excluded.push_back({{"set_id", e.set_id}, {"reason", e.reason}});
  return {{"n_aligned", alignment.aligned.size()}, {"n_excluded", alignment.excluded.size()}, {"excluded", excluded}};
}

Json to_json(const BaselineReport& r) {
  Json records = Json::array();
  for (const auto& rec : r.records) records.push_back(to_json(rec));
  Json human = Json::array();
  for (const auto& h : r.human) {
    human.push_back({{"condition", h.condition.label()}, {"mean", number(h.mean)}, {"se", number(h.se)}});
  }
  return {{"mask", to_json(r.mask.heads())},
          {"mean_surprisal_bits", number(mean_surprisal(r.records))},
          {"conditions", to_json(r.summary)},
          {"sensitivity", to_json(r.sensitivity)},
          {"regression", to_json(r.fit)},
          {"human_reading_times", human},
          {"records", records}};
}

Json to_json(const ScreenResult& r) {
  const auto& acc = r.accuracy_table;
  Json ranked = Json::array();
  for (const HeadIndex& h : r.selected_heads) {
    ranked.push_back({{"head", h.str()},
                      {"dependent_accuracy", acc.dependent_acc.at(h)},
                      {"distractor_accuracy", acc.distractor_acc.at(h)}});
  }
  return {{"cutoff", r.cutoff},
          {"k_dependent", acc.k_dependent},
          {"k_distractor", acc.k_distractor},
          {"selected_heads", to_json(r.selected_heads)},
          {"selected", ranked}};
}

Json to_json(const AblationReport& r) {
  Json masks = Json::array();
  for (const HeadMask& m : r.random_masks) masks.push_back(to_json(m.heads()));
  Json replicates = Json::array();
  for (const RegressionFit& f : r.replicate_fits) replicates.push_back(to_json(f));
  return {{"targeted",
           {{"heads", to_json(r.targeted_heads)},
            {"mean_surprisal_bits", number(mean_surprisal(r.targeted_records))},
            {"conditions", to_json(r.targeted_summary)},
            {"sensitivity", to_json(r.targeted_sensitivity)},
            {"regression", to_json(r.targeted_fit)}}},
          {"random",
           {{"n_random", r.n_random},
            {"seed", r.seed},
            {"mean_surprisal_bits", number(mean_surprisal(r.random_records))},
            {"conditions", to_json(r.random_summary)},
            {"regression", to_json(r.random_fit)},
            {"masks", masks},
            {"replicate_regressions", replicates}}}};
}

Json to_json(const PruneCurve& curve) {
  Json steps = Json::array();
  for (std::size_t k = 0; k < curve.steps.size(); ++k) {
    const PruneStep& s = curve.steps[k];
    Json means = Json::object();
    for (int c = 0; c < 4; ++c) means[Condition::from_index(c).label()] = number(s.condition_means[c]);
    steps.push_back({{"step", k},
                     {"pruned_head", s.pruned_head ? Json(s.pruned_head->str()) : Json(nullptr)},
                     {"mask", to_json(s.mask.heads())},
                     {"sensitivity", to_json(s.sensitivity)},
                     {"condition_means", means},
                     {"regression", to_json(s.fit)}});
  }
  return {{"steps", steps}};
}

Json to_json(const PerplexityReport& r) {
  Json heads = Json::object();
  for (const auto& [h, bits] : r.per_head_bits) heads[h.str()] = number(bits);
  return {{"baseline_bits", number(r.baseline_bits)},
          {"baseline_perplexity", number(std::exp2(r.baseline_bits))},
          {"per_head_bits", heads}};
}

std::vector<HeadIndex> heads_from_json(const Json& j, const std::string& source) {
  const Json* list = &j;
  if (j.is_object()) {
    if (!j.contains("selected_heads")) throw ParseError(source + ": object has no \"selected_heads\"");
    list = &j.at("selected_heads");
  }
  if (!list->is_array()) throw ParseError(source + ": expected an array of \"layer.head\" strings");
  std::vector<HeadIndex> heads;
  for (const Json& item : *list) {
    if (!item.is_string()) throw ParseError(source + ": head entries must be strings like \"0.10\"");
    try {
      heads.push_back(HeadIndex::parse(item.get<std::string>()));
    } catch (const ConfigError& e) {
      throw ParseError(source + ": " + e.what());
    }
  }
  return heads;
}

std::string surprisal_csv(const std::vector<SurprisalRecord>& records) {
  std::string out = "set_id,condition,surprisal_bits\n";
  for (const auto& r : records) {
    out += csv_field(r.set_id) + "," + r.condition.label() + "," + format_double(r.verb_surprisal_bits) + "\n";
  }
  return out;
}

std::string screen_csv(const ScreenResult& r) {
  const auto& acc = r.accuracy_table;
  const auto& diff = r.attention_difference;
  std::vector<int> rank(static_cast<std::size_t>(acc.dependent_acc.n_layers()) * acc.dependent_acc.n_heads(), 0);
  for (std::size_t i = 0; i < r.selected_heads.size(); ++i) {
    const HeadIndex h = r.selected_heads[i];
    rank[static_cast<std::size_t>(h.layer) * acc.dependent_acc.n_heads() + h.head] = static_cast<int>(i + 1);
  }
  std::string out = "layer,head,dependent_accuracy,distractor_accuracy,dependent_attention_diff,"
                    "distractor_attention_diff,selected_rank\n";
  for (int l = 0; l < acc.dependent_acc.n_layers(); ++l) {
    for (int h = 0; h < acc.dependent_acc.n_heads(); ++h) {
      out += std::to_string(l) + "," + std::to_string(h) + "," + format_double(acc.dependent_acc.at(l, h)) + "," +
             format_double(acc.distractor_acc.at(l, h)) + "," + format_double(diff.dependent_diff.at(l, h)) + "," +
             format_double(diff.distractor_diff.at(l, h)) + "," +
             std::to_string(rank[static_cast<std::size_t>(l) * acc.dependent_acc.n_heads() + h]) + "\n";
    }
  }
  return out;
}

std::string ablation_csv(const AblationReport& r) {
  std::string out = "set_id,condition,targeted_surprisal_bits,random_mean_surprisal_bits\n";
  for (std::size_t i = 0; i < r.targeted_records.size(); ++i) {
    const auto& t = r.targeted_records[i];
    out += csv_field(t.set_id) + "," + t.condition.label() + "," + format_double(t.verb_surprisal_bits) + "," +
           format_double(r.random_records[i].verb_surprisal_bits) + "\n";
  }
  return out;
}

std::string prune_csv(const PruneCurve& curve) {
  std::string out =
      "step,pruned_head,dependent_sensitivity_bits,distractor_sensitivity_bits,mean_pl_pl,mean_pl_impl,"
      "mean_impl_pl,mean_impl_impl,mean_all\n";
  for (std::size_t k = 0; k < curve.steps.size(); ++k) {
    const PruneStep& s = curve.steps[k];
    const auto& m = s.condition_means;
    out += std::to_string(k) + "," + (s.pruned_head ? s.pruned_head->str() : std::string()) + "," +
           format_double(s.sensitivity.dependent_sensitivity_bits) + "," +
           format_double(s.sensitivity.distractor_sensitivity_bits) + "," + format_double(m[0]) + "," +
           format_double(m[1]) + "," + format_double(m[2]) + "," + format_double(m[3]) + "," +
           format_double((m[0] + m[1] + m[2] + m[3]) / 4.0) + "\n";
  }
  return out;
}

std::string perplexity_csv(const PerplexityReport& r) {
  std::string out = "removed_head,mean_surprisal_bits,perplexity,delta_bits\n";
  out += "none," + format_double(r.baseline_bits) + "," + format_double(std::exp2(r.baseline_bits)) + ",0\n";
  for (const auto& [h, bits] : r.per_head_bits) {
    out += h.str() + "," + format_double(bits) + "," + format_double(std::exp2(bits)) + "," +
           format_double(bits - r.baseline_bits) + "\n";
  }
  return out;
}

std::string regression_table(const RegressionFit& fit) {
  char line[160];
  std::snprintf(line, sizeof line, "%-26s %10s %10s %8s %9s\n", "term", "estimate", "se", "t", "p");
  std::string out = line;
  const auto t = fit.terms();
  for (std::size_t i = 0; i < t.size(); ++i) {
    const Coefficient& c = *t[i];
    std::snprintf(line, sizeof line, "%-26s %10.4f %10.4f %8.3f %9.4f", RegressionFit::kTermNames[i], c.estimate, c.se,
                  c.t, c.p);
    out += line;
    out += c.p < 0.001 ? " **\n" : c.p < 0.05 ? " *\n" : "\n";
  }
  std::snprintf(line, sizeof line, "n = %zu, residual df = %zu, %s coding\n", fit.n_observations, fit.residual_df,
                to_string(fit.coding));
  return out + line;
}

std::string condition_table(const std::array<ConditionStats, 4>& summary,
                            const std::vector<HumanConditionSummary>& human) {
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %12s %10s %5s", "condition", "bits", "se", "n");
  std::string out = line;
  if (!human.empty()) {
    std::snprintf(line, sizeof line, " %12s %10s", "human_mean", "human_se");
    out += line;
  }
  out += "\n";
  for (const ConditionStats& s : summary) {
    std::snprintf(line, sizeof line, "%-10s %12.4f %10.4f %5zu", s.condition.label().c_str(), s.mean, s.se, s.n);
    out += line;
    if (!human.empty()) {
      const auto it = std::find_if(human.begin(), human.end(),
                                   [&](const HumanConditionSummary& h) { return h.condition == s.condition; });
      if (it != human.end()) {
        std::snprintf(line, sizeof line, " %12.4f %10.4f", it->mean, it->se);
      } else {
        std::snprintf(line, sizeof line, " %12s %10s", "-", "-");
      }
      out += line;
    }
    out += "\n";
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + file.string() + " for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256: digest init failed");
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  static const char* kHex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 15];
  }
  return out;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Json to_json(const Manifest& m, const std::string& timestamp) {
  Json assets = Json::object();
  for (const auto& [role, path] : m.assets) {
    assets[role] = {{"path", path.string()}, {"sha256", sha256_file(path)}};
  }
  return {{"experiment", m.experiment},
          {"run_id", m.run_id},
          {"software_version", software_version()},
          {"seed", m.seed ? Json(*m.seed) : Json(nullptr)},
          {"cutoff", m.cutoff ? Json(*m.cutoff) : Json(nullptr)},
          {"parameters", m.parameters},
          {"assets", assets},
          {"timestamp", timestamp}};
}

std::filesystem::path write_run(const std::filesystem::path& root, const Manifest& manifest, const Json& summary,
                                const std::string& table_csv) {
  if (manifest.experiment.empty() || manifest.run_id.empty()) {
    throw ConfigError("write_run: experiment and run id must be non-empty");
  }
  if (manifest.run_id.find('/') != std::string::npos || manifest.run_id == "." || manifest.run_id == "..") {
    throw ConfigError("run id \"" + manifest.run_id + "\" is not a plain directory name");
  }
  const auto dir = root / manifest.experiment / manifest.run_id;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create " + dir.string() + ": " + ec.message());
  const Json man = to_json(manifest, utc_timestamp());
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  write_text(dir / "table.csv", table_csv);
  write_text(dir / "manifest.json", man.dump(2) + "\n");
  return dir / "manifest.json";
}

}  // namespace headprobe
