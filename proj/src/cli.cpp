#include "headprobe/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "headprobe/error.hpp"
#include "headprobe/experiments.hpp"
#include "headprobe/report.hpp"
#include "headprobe/synthetic.hpp"

#ifndef HEADPROBE_ASSET_DIR
#define HEADPROBE_ASSET_DIR "assets"
#endif

namespace headprobe {
namespace {

namespace fs = std::filesystem;

struct Options {
  std::string model, vocab, merges, stimuli, corpus, human;
  std::string output_dir = "results";
  std::string run_id;
  std::vector<std::string> mask, heads, order;
  std::string coding = "sum";
  double cutoff = 0.70;
  std::size_t n_random = 100;
  std::uint64_t seed = 0;
  unsigned workers = 0;
  bool streaming = false;

  // synth
  std::string out_file;
  int n_layers = 12, n_heads = 12, d_model = 768, positions = 1024, vocab_size = 50257;
  bool uniform = false;

  // tokenize
  std::vector<std::string> texts;
};

std::string default_asset(const char* relative) { return (fs::path(HEADPROBE_ASSET_DIR) / relative).string(); }

void require_file(const std::string& path, const std::string& flag, const char* env) {
  if (path.empty()) throw ConfigError(flag + " is required (or set " + env + ")");
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw ConfigError(flag + ": no such file: " + path);
}

Coding parse_coding(const std::string& s) { return s == "treatment" ? Coding::kTreatment : Coding::kSum; }

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// "l.h" items, or a single "@file" holding a JSON head list or screen summary.
std::vector<HeadIndex> parse_head_spec(const std::vector<std::string>& items, const std::string& flag) {
  if (items.size() == 1 && items[0].starts_with("@")) {
    const fs::path file = items[0].substr(1);
    std::error_code ec;
    if (!fs::is_regular_file(file, ec)) throw ConfigError(flag + ": no such file: " + file.string());
    Json j;
    try {
      j = Json::parse(read_text(file));
    } catch (const Json::parse_error& e) {
      throw ParseError(file.string() + ": " + e.what());
    }
    return heads_from_json(j, file.string());
  }
  std::vector<HeadIndex> heads;
  for (const std::string& item : items) {
    try {
      heads.push_back(HeadIndex::parse(item));
    } catch (const ConfigError& e) {
      throw ConfigError(flag + ": " + e.what());
    }
  }
  return heads;
}

void check_heads(const std::vector<HeadIndex>& heads, const ModelConfig& config, const std::string& flag) {
  try {
    HeadMask(heads).check_bounds(config);
  } catch (const DomainError& e) {
    throw ConfigError(flag + ": " + e.what());
  }
}

std::string compact_timestamp() {
  std::string ts = utc_timestamp();
  std::erase(ts, '-');
  std::erase(ts, ':');
  return ts;
}

class Runner {
 public:
  Runner(Options& o, std::ostream& out) : o_(o), out_(out) {}

  // Fills asset paths from environment-aware flags and bundled defaults.
  void resolve_paths() {
    if (o_.model.empty()) o_.model = default_asset("gpt2/model.safetensors");
    if (o_.vocab.empty()) o_.vocab = default_asset("gpt2/vocab.json");
    if (o_.merges.empty()) o_.merges = default_asset("gpt2/merges.txt");
    if (o_.run_id.empty()) o_.run_id = compact_timestamp();
  }

  void check_model_assets() {
    require_file(o_.model, "--model", "HEADPROBE_MODEL");
    require_file(o_.vocab, "--vocab", "HEADPROBE_VOCAB");
    require_file(o_.merges, "--merges", "HEADPROBE_MERGES");
  }

  void check_stimulus_assets() {
    check_model_assets();
    require_file(o_.stimuli, "--stimuli", "HEADPROBE_STIMULI");
    if (!o_.human.empty()) require_file(o_.human, "--human", "HEADPROBE_HUMAN");
  }

  void load_stimulus_assets() {
    tokenizer_ = std::make_unique<Tokenizer>(Tokenizer::load(o_.vocab, o_.merges));
    const auto sets = load_stimuli(o_.stimuli);
    alignment_ = align_and_filter(sets, *tokenizer_);
    if (alignment_.aligned.empty()) {
      throw IngestionError(o_.stimuli + ": no stimulus set survived single-token filtering (" +
                           std::to_string(alignment_.excluded.size()) + " excluded)");
    }
    if (!o_.human.empty()) human_ = load_human_summary(o_.human);
    load_model_checked();
  }

  void load_model_checked() {
    model_ = std::make_unique<ModelBundle>(load_model(o_.model));
    if (static_cast<std::size_t>(model_->config.vocab_size) < tokenizer_->vocab_size()) {
      throw ConfigError("--model: vocabulary of " + std::to_string(model_->config.vocab_size) +
                        " is smaller than the tokenizer's " + std::to_string(tokenizer_->vocab_size()));
    }
  }

  Manifest manifest(const std::string& experiment) const {
    Manifest m;
    m.experiment = experiment;
    m.run_id = o_.run_id;
    m.assets = {{"model", o_.model}, {"vocab", o_.vocab}, {"merges", o_.merges}};
    if (!o_.stimuli.empty()) m.assets["stimuli"] = o_.stimuli;
    if (!o_.human.empty()) m.assets["human"] = o_.human;
    if (!o_.corpus.empty()) m.assets["corpus"] = o_.corpus;
    return m;
  }

  void finish(const Manifest& m, const Json& summary, const std::string& csv) {
    const fs::path path = write_run(o_.output_dir, m, summary, csv);
    out_ << "manifest: " << path.string() << "\n";
  }

  void alignment_note() {
    out_ << "stimulus sets: " << alignment_.aligned.size() << " aligned, " << alignment_.excluded.size()
         << " excluded\n";
  }

  int surprisal() {
    check_stimulus_assets();
    const auto mask_heads = parse_head_spec(o_.mask, "--mask");
    check_heads(mask_heads, read_model_config(o_.model), "--mask");
    load_stimulus_assets();

    const BaselineReport r =
        run_baseline(*model_, alignment_.aligned, human_, HeadMask(mask_heads), o_.workers, parse_coding(o_.coding));
    Json summary = {{"alignment", to_json(alignment_)}};
    summary.update(to_json(r));

    alignment_note();
    out_ << condition_table(r.summary, r.human) << "\n" << regression_table(r.fit);
    Manifest m = manifest("surprisal");
    m.parameters = {{"mask", to_json(mask_heads)}, {"coding", o_.coding}};
    finish(m, summary, surprisal_csv(r.records));
    return kExitOk;
  }

  int screen() {
    check_stimulus_assets();
    if (!(o_.cutoff > 0.5)) throw ConfigError("--cutoff must exceed 0.5");
    load_stimulus_assets();

    const ScreenResult r = screen_heads(*model_, alignment_.aligned, o_.cutoff, o_.workers);
    Json summary = {{"alignment", to_json(alignment_)}};
    summary.update(to_json(r));

    alignment_note();
    out_ << "selected " << r.selected_heads.size() << " heads:";
    for (const HeadIndex& h : r.selected_heads) out_ << " " << h.str();
    out_ << "\n";
    Manifest m = manifest("screen");
    m.cutoff = o_.cutoff;
    finish(m, summary, screen_csv(r));
    return kExitOk;
  }

  int ablate() {
    check_stimulus_assets();
    if (o_.heads.empty()) throw ConfigError("--heads is required");
    if (o_.n_random < 1) throw ConfigError("--n-random must be at least 1");
    const auto heads = parse_head_spec(o_.heads, "--heads");
    if (heads.empty()) throw ConfigError("--heads: empty head list");
    check_heads(heads, read_model_config(o_.model), "--heads");
    load_stimulus_assets();

    const AblationReport r = ablate_set(*model_, alignment_.aligned, heads, o_.n_random, o_.seed, o_.workers,
                                        parse_coding(o_.coding));
    Json summary = {{"alignment", to_json(alignment_)}};
    summary.update(to_json(r));

    alignment_note();
    out_ << "targeted (" << heads.size() << " heads)\n"
         << condition_table(r.targeted_summary) << regression_table(r.targeted_fit) << "\nrandom baseline ("
         << r.n_random << " masks, seed " << r.seed << ")\n"
         << condition_table(r.random_summary) << regression_table(r.random_fit);
    Manifest m = manifest("ablate");
    m.seed = o_.seed;
    m.parameters = {{"heads", to_json(heads)}, {"n_random", o_.n_random}, {"coding", o_.coding}};
    finish(m, summary, ablation_csv(r));
    return kExitOk;
  }

  int prune() {
    check_stimulus_assets();
    std::optional<std::uint64_t> shuffle_seed;
    std::vector<HeadIndex> order;
    const bool explicit_order = !o_.order.empty() && !(o_.order.size() == 1 && o_.order[0].starts_with("random:"));
    if (!o_.order.empty() && !explicit_order) {
      const std::string s = o_.order[0].substr(7);
      try {
        std::size_t used = 0;
        shuffle_seed = std::stoull(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
      } catch (const std::exception&) {
        throw ConfigError("--order: malformed seed in \"" + o_.order[0] + "\"");
      }
    }
    if (explicit_order) {
      order = parse_head_spec(o_.order, "--order");
      check_heads(order, read_model_config(o_.model), "--order");
    } else if (!(o_.cutoff > 0.5)) {
      throw ConfigError("--cutoff must exceed 0.5");
    }
    load_stimulus_assets();

    Json screen_json = nullptr;
    if (!explicit_order) {
      const ScreenResult screened = screen_heads(*model_, alignment_.aligned, o_.cutoff, o_.workers);
      order = shuffle_seed ? shuffled(screened.selected_heads, *shuffle_seed) : screened.selected_heads;
      screen_json = {{"cutoff", o_.cutoff}, {"selected_heads", to_json(screened.selected_heads)}};
    }
    const PruneCurve curve = gradual_prune(*model_, alignment_.aligned, order, o_.workers, parse_coding(o_.coding));
    Json summary = {{"alignment", to_json(alignment_)}, {"order", to_json(order)}, {"screen", screen_json}};
    summary.update(to_json(curve));

    alignment_note();
    out_ << "step  head   dependent_bits  distractor_bits\n";
    for (std::size_t k = 0; k < curve.steps.size(); ++k) {
      const PruneStep& s = curve.steps[k];
      char line[96];
      std::snprintf(line, sizeof line, "%4zu  %-5s %15.4f %16.4f\n", k,
                    s.pruned_head ? s.pruned_head->str().c_str() : "-", s.sensitivity.dependent_sensitivity_bits,
                    s.sensitivity.distractor_sensitivity_bits);
      out_ << line;
    }
    Manifest m = manifest("prune");
    if (shuffle_seed) m.seed = *shuffle_seed;
    if (!explicit_order) m.cutoff = o_.cutoff;
    m.parameters = {{"order", explicit_order ? Json("explicit") : Json(shuffle_seed ? "random" : "screen_ranking")},
                    {"coding", o_.coding}};
    finish(m, summary, prune_csv(curve));
    return kExitOk;
  }

  int perplexity() {
    check_model_assets();
    require_file(o_.corpus, "--corpus", "HEADPROBE_CORPUS");
    tokenizer_ = std::make_unique<Tokenizer>(Tokenizer::load(o_.vocab, o_.merges));
    const auto sentences = load_corpus(o_.corpus);
    const CorpusMode mode = o_.streaming ? CorpusMode::kStreaming : CorpusMode::kPerSentence;
    const auto sequences = tokenize_corpus(*tokenizer_, sentences, mode);
    load_model_checked();

    const PerplexityReport r = perplexity_sweep(*model_, sequences, o_.workers);
    std::size_t scored = 0;
    for (const auto& s : sequences) scored += s.size() - 1;
    Json summary = {{"corpus",
                     {{"sentences", sentences.size()},
                      {"mode", o_.streaming ? "streaming" : "per_sentence"},
                      {"scored_tokens", scored}}}};
    summary.update(to_json(r));

    std::size_t small = 0;
    for (const auto& [h, bits] : r.per_head_bits) small += std::abs(bits - r.baseline_bits) < 0.1 ? 1 : 0;
    out_ << "baseline: " << format_double(r.baseline_bits) << " bits (perplexity "
         << format_double(std::exp2(r.baseline_bits)) << ")\n"
         << small << " of " << r.per_head_bits.size() << " single-head removals change it by < 0.1 bits\n";
    Manifest m = manifest("perplexity");
    m.parameters = {{"mode", o_.streaming ? "streaming" : "per_sentence"}};
    finish(m, summary, perplexity_csv(r));
    return kExitOk;
  }

  int synth() {
    if (o_.out_file.empty()) throw ConfigError("--out is required");
    ModelConfig c;
    c.n_layers = o_.n_layers;
    c.n_heads = o_.n_heads;
    c.d_model = o_.d_model;
    c.max_positions = o_.positions;
    c.vocab_size = o_.vocab_size;
    if (c.n_heads <= 0 || c.d_model % c.n_heads != 0) throw ConfigError("--d-model must be a multiple of --heads");
    c.d_head = c.d_model / c.n_heads;
    c.validate();
    const ModelBundle m = o_.uniform ? make_uniform_model(c, o_.seed) : make_random_model(c, o_.seed);
    save_model(o_.out_file, m);
    out_ << o_.out_file << "\n";
    return kExitOk;
  }

  int tokenize() {
    require_file(o_.vocab, "--vocab", "HEADPROBE_VOCAB");
    require_file(o_.merges, "--merges", "HEADPROBE_MERGES");
    const Tokenizer tok = Tokenizer::load(o_.vocab, o_.merges);
    for (const std::string& text : o_.texts) {
      const auto ids = tok.encode(text);
      Json tokens = Json::array();
      for (TokenId id : ids) tokens.push_back(tok.token_string(id));
      out_ << Json{{"text", text}, {"ids", ids}, {"tokens", tokens}}.dump() << "\n";
    }
    return kExitOk;
  }

 private:
  Options& o_;
  std::ostream& out_;
  std::unique_ptr<Tokenizer> tokenizer_;
  std::unique_ptr<ModelBundle> model_;
  AlignmentResult alignment_;
  std::vector<HumanConditionSummary> human_;
};

void add_model_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--model", o.model, "weights container")->envname("HEADPROBE_MODEL");
  cmd->add_option("--vocab", o.vocab, "GPT2 vocab.json")->envname("HEADPROBE_VOCAB");
  cmd->add_option("--merges", o.merges, "GPT2 merges.txt")->envname("HEADPROBE_MERGES");
  cmd->add_option("--output-dir", o.output_dir, "results root")->envname("HEADPROBE_OUTPUT_DIR");
  cmd->add_option("--run-id", o.run_id, "results subdirectory (default: UTC timestamp)");
  cmd->add_option("--workers", o.workers, "worker threads (0 = all cores)");
}

void add_stimulus_flags(CLI::App* cmd, Options& o) {
  add_model_flags(cmd, o);
  cmd->add_option("--stimuli", o.stimuli, "stimulus JSON")->envname("HEADPROBE_STIMULI");
  cmd->add_option("--human", o.human, "human reading-time summary CSV")->envname("HEADPROBE_HUMAN");
  cmd->add_option("--coding", o.coding, "regression predictor coding")
      ->check(CLI::IsMember({"sum", "treatment"}));
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Attention-head probing of GPT2 verb surprisal", "headprobe"};
  app.require_subcommand(1);
  app.set_version_flag("--version", software_version());

  auto* surprisal = app.add_subcommand("surprisal", "verb surprisal, condition summary and regression");
  add_stimulus_flags(surprisal, o);
  surprisal->add_option("--mask", o.mask, "heads to remove: l.h list or @file")->delimiter(',');

  auto* screen = app.add_subcommand("screen", "rank heads by attention accuracy");
  add_stimulus_flags(screen, o);
  screen->add_option("--cutoff", o.cutoff, "accuracy cutoff for both noun types");

  auto* ablate = app.add_subcommand("ablate", "targeted vs random head ablation");
  add_stimulus_flags(ablate, o);
  ablate->add_option("--heads", o.heads, "targeted heads: l.h list or @file")->delimiter(',');
  ablate->add_option("--n-random", o.n_random, "random replicate count");
  ablate->add_option("--seed", o.seed, "random mask seed");

  auto* prune = app.add_subcommand("prune", "cumulative head pruning");
  add_stimulus_flags(prune, o);
  prune->add_option("--order", o.order, "l.h list, @file, or random:<seed> (default: screen ranking)")
      ->delimiter(',');
  prune->add_option("--cutoff", o.cutoff, "screen cutoff when the order comes from screening");

  auto* perplexity = app.add_subcommand("perplexity", "corpus surprisal with every single head removed");
  add_model_flags(perplexity, o);
  perplexity->add_option("--corpus", o.corpus, "one sentence per line")->envname("HEADPROBE_CORPUS");
  perplexity->add_flag("--streaming", o.streaming, "score the corpus as one running text");

  auto* synth = app.add_subcommand("synth", "write a randomly initialised model");
  synth->add_option("--out", o.out_file, "output weights file");
  synth->add_option("--seed", o.seed, "initialisation seed");
  synth->add_option("--layers", o.n_layers);
  synth->add_option("--heads", o.n_heads);
  synth->add_option("--d-model", o.d_model);
  synth->add_option("--positions", o.positions);
  synth->add_option("--vocab-size", o.vocab_size);
  synth->add_flag("--uniform", o.uniform, "zero all projections: uniform attention and predictions");

  auto* tokenize = app.add_subcommand("tokenize", "print GPT2 token ids");
  tokenize->add_option("--vocab", o.vocab)->envname("HEADPROBE_VOCAB");
  tokenize->add_option("--merges", o.merges)->envname("HEADPROBE_MERGES");
  tokenize->add_option("text", o.texts)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  Runner runner(o, out);
  try {
    runner.resolve_paths();
    if (*surprisal) return runner.surprisal();
    if (*screen) return runner.screen();
    if (*ablate) return runner.ablate();
    if (*prune) return runner.prune();
    if (*perplexity) return runner.perplexity();
    if (*synth) return runner.synth();
    if (*tokenize) return runner.tokenize();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace headprobe
