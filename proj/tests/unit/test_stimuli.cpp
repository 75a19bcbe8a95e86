#include <gtest/gtest.h>

#include "headprobe/error.hpp"
#include "support.hpp"

namespace headprobe {
namespace {

using nlohmann::json;

json span_of(const std::string& text, const std::string& word, std::size_t from = 0) {
  const auto b = text.find(word, from);
  return json::array({b, b + word.size()});
}

// One 2x2 set from the usual relative-clause frame.
json make_set(const std::string& id, std::array<std::string, 2> deps, std::array<std::string, 2> diss,
              const std::string& verb) {
  json variants = json::array();
  for (const Condition c : Condition::all()) {
    const std::string dep = deps[c.dependent_plausible ? 0 : 1];
    const std::string dis = diss[c.distractor_plausible ? 0 : 1];
    const std::string text = "Sue saw the " + dep + " that the man with the " + dis + " " + verb + " today.";
    const auto dep_at = text.find(" " + dep) + 1;
    const auto dis_at = text.find(" " + dis, dep_at + dep.size()) + 1;
    const auto verb_at = text.find(" " + verb + " ", dis_at + dis.size()) + 1;
    variants.push_back({{"condition", c.label()},
                        {"text", text},
                        {"dependent", {dep_at, dep_at + dep.size()}},
                        {"distractor", {dis_at, dis_at + dis.size()}},
                        {"verb", {verb_at, verb_at + verb.size()}}});
  }
  return {{"set_id", id}, {"variants", variants}};
}

json plate_set() { return make_set("plate", {"plate", "letter"}, {"cup", "tie"}, "shattered"); }

void expect_ingestion_error(const json& doc, const std::string& fragment) {
  try {
    parse_stimuli(doc.dump(), "test.json");
    FAIL() << "expected IngestionError containing " << fragment;
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

TEST(Stimuli, DemoFileLoadsAndAligns) {
  const auto sets = load_stimuli(testing::demo_stimuli_path());
  ASSERT_EQ(sets.size(), 9u);
  const AlignmentResult r = align_and_filter(sets, testing::gpt2_tokenizer());
  EXPECT_EQ(r.aligned.size(), 8u);
  ASSERT_EQ(r.excluded.size(), 1u);
  EXPECT_EQ(r.excluded[0].set_id, "shatter-long");
  EXPECT_NE(r.excluded[0].reason.find("chandelier"), std::string::npos);
}

TEST(Stimuli, ExampleVerbAlignsToShatteredToken) {
  const Tokenizer& tok = testing::gpt2_tokenizer();
  const auto r = align_and_filter(parse_stimuli(json::array({plate_set()}).dump()), tok);
  ASSERT_EQ(r.aligned.size(), 1u);
  const AlignedStimulus& a = r.aligned[0].at({true, true});
  EXPECT_EQ(tok.token_bytes(a.ids[a.verb_tok]), " shattered");
  EXPECT_EQ(tok.token_bytes(a.ids[a.dependent_tok]), " plate");
  EXPECT_EQ(tok.token_bytes(a.ids[a.distractor_tok]), " cup");
  const AlignedStimulus& d = r.aligned[0].at({false, false});
  EXPECT_EQ(tok.token_bytes(d.ids[d.dependent_tok]), " letter");
  EXPECT_EQ(tok.token_bytes(d.ids[d.distractor_tok]), " tie");
}

TEST(StimuliProperty, AlignmentAgreesWithPrefixDecoding) {
  const Tokenizer& tok = testing::gpt2_tokenizer();
  const auto sets = load_stimuli(testing::demo_stimuli_path());
  const auto r = align_and_filter(sets, tok);
  for (const AlignedSet& aligned : r.aligned) {
    const auto& set = *std::find_if(sets.begin(), sets.end(), [&](auto& s) { return s.set_id == aligned.set_id; });
    for (const Condition c : Condition::all()) {
      const AlignedStimulus& a = aligned.at(c);
      const SentenceVariant& v = set.at(c);
      EXPECT_LT(a.dependent_tok, a.distractor_tok);
      EXPECT_LT(a.distractor_tok, a.verb_tok);
      for (auto [tok_pos, span] : {std::pair{a.dependent_tok, v.dependent}, std::pair{a.distractor_tok, v.distractor},
                                   std::pair{a.verb_tok, v.verb}}) {
        const std::span<const TokenId> prefix(a.ids.data(), static_cast<std::size_t>(tok_pos) + 1);
        EXPECT_EQ(tok.decode(prefix), v.text.substr(0, span.end));
      }
    }
  }
}

TEST(Stimuli, ExclusionIsWholeSet) {
  // Only the implausible dependent is multi-token, yet all four variants go.
  const json doc = json::array({plate_set(), make_set("long", {"plate", "chandelier"}, {"cup", "tie"}, "shattered")});
  const auto r = align_and_filter(parse_stimuli(doc.dump()), testing::gpt2_tokenizer());
  ASSERT_EQ(r.aligned.size(), 1u);
  EXPECT_EQ(r.aligned[0].set_id, "plate");
  ASSERT_EQ(r.excluded.size(), 1u);
  EXPECT_EQ(r.excluded[0].set_id, "long");
}

TEST(Stimuli, MultiTokenVerbExcludes) {
  const json doc = json::array({make_set("v", {"plate", "letter"}, {"cup", "tie"}, "defenestrated")});
  const auto r = align_and_filter(parse_stimuli(doc.dump()), testing::gpt2_tokenizer());
  EXPECT_TRUE(r.aligned.empty());
  ASSERT_EQ(r.excluded.size(), 1u);
  EXPECT_NE(r.excluded[0].reason.find("verb"), std::string::npos);
}

TEST(Stimuli, SpanInsideATokenIsAnAlignmentError) {
  json doc = json::array({plate_set()});
  // "plate" inside " plates": single token on its own, but not a boundary here.
  for (auto& v : doc[0]["variants"]) {
    std::string text = v["text"];
    const auto at = v["dependent"][1].get<std::size_t>();
    text.insert(at, "s");
    v["text"] = text;
    v["distractor"] = {v["distractor"][0].get<int>() + 1, v["distractor"][1].get<int>() + 1};
    v["verb"] = {v["verb"][0].get<int>() + 1, v["verb"][1].get<int>() + 1};
  }
  const auto sets = parse_stimuli(doc.dump());
  try {
    align_and_filter(sets, testing::gpt2_tokenizer());
    FAIL();
  } catch (const AlignmentError& e) {
    EXPECT_NE(std::string(e.what()).find("plates"), std::string::npos) << e.what();
  }
}

TEST(Stimuli, EmptyFileIsEmptyList) {
  testing::TempDir dir;
  EXPECT_TRUE(load_stimuli(dir.write("e.json", "")).empty());
  EXPECT_TRUE(load_stimuli(dir.write("w.json", "  \n")).empty());
  EXPECT_TRUE(parse_stimuli("[]").empty());
  EXPECT_THROW(load_stimuli(dir / "absent.json"), ConfigError);
}

TEST(Stimuli, VerbDisagreementIsIngestionError) {
  json doc = json::array({plate_set()});
  auto& v = doc[0]["variants"][3];
  std::string text = v["text"];
  const auto b = v["verb"][0].get<std::size_t>();
  text.replace(b, 9, "scattered");
  v["text"] = text;
  expect_ingestion_error(doc, "set plate, variants[impl-impl].verb");
}

TEST(Stimuli, SpanOutOfBounds) {
  json doc = json::array({plate_set()});
  doc[0]["variants"][1]["verb"] = {70, 500};
  expect_ingestion_error(doc, "variants[pl-impl].verb");
  doc = json::array({plate_set()});
  doc[0]["variants"][0]["dependent"] = {5, 5};
  expect_ingestion_error(doc, "variants[pl-pl].dependent");
  doc = json::array({plate_set()});
  doc[0]["variants"][0]["dependent"] = "12-17";
  expect_ingestion_error(doc, "variants[pl-pl].dependent");
}

TEST(Stimuli, SpansMustBeOrdered) {
  json doc = json::array({plate_set()});
  auto& v = doc[0]["variants"][0];
  std::swap(v["dependent"], v["distractor"]);
  expect_ingestion_error(doc, "ordered");
}

TEST(Stimuli, NounWordsMustPairAcrossConditions) {
  // pl-pl and pl-impl must share the dependent word.
  json doc = json::array({make_set("x", {"plate", "letter"}, {"cup", "tie"}, "shattered")});
  auto& v = doc[0]["variants"][1];
  std::string text = v["text"];
  const auto b = v["dependent"][0].get<std::size_t>();
  text.replace(b, 5, "glass");
  v["text"] = text;
  expect_ingestion_error(doc, "set x, dependent");

  expect_ingestion_error(json::array({make_set("same", {"plate", "plate"}, {"cup", "tie"}, "shattered")}),
                         "same word");
}

TEST(Stimuli, StructuralErrors) {
  expect_ingestion_error(json::object(), "array");
  json doc = json::array({plate_set()});
  doc[0]["variants"].erase(2);
  expect_ingestion_error(doc, "exactly 4 variants");
  doc = json::array({plate_set()});
  doc[0]["variants"][2]["condition"] = "pl-pl";
  expect_ingestion_error(doc, "appears twice");
  doc = json::array({plate_set()});
  doc[0]["variants"][2]["condition"] = "maybe";
  expect_ingestion_error(doc, "unknown condition");
  doc = json::array({plate_set(), plate_set()});
  expect_ingestion_error(doc, "duplicate set id");
  doc = json::array({plate_set()});
  doc[0].erase("set_id");
  expect_ingestion_error(doc, "set_id");
  doc = json::array({plate_set()});
  doc[0]["variants"][0].erase("verb");
  expect_ingestion_error(doc, "variants[pl-pl].verb");
  EXPECT_THROW(parse_stimuli("[{"), IngestionError);
}

TEST(ConditionTest, LabelsAndIndices) {
  const std::array<std::string, 4> labels = {"pl-pl", "pl-impl", "impl-pl", "impl-impl"};
  for (int i = 0; i < 4; ++i) {
    const Condition c = Condition::from_index(i);
    EXPECT_EQ(c.index(), i);
    EXPECT_EQ(c.label(), labels[i]);
    EXPECT_EQ(Condition::parse(labels[i]), c);
  }
  EXPECT_TRUE(Condition::from_index(1).dependent_plausible);
  EXPECT_FALSE(Condition::from_index(1).distractor_plausible);
  EXPECT_THROW(Condition::parse("pl"), ConfigError);
}

TEST(Corpus, SkipsBlankLines) {
  testing::TempDir dir;
  const auto lines = load_corpus(dir.write("c.txt", "One.\n\n  \nTwo two.\r\nThree\n"));
  EXPECT_EQ(lines, (std::vector<std::string>{"One.", "Two two.", "Three"}));
  EXPECT_THROW(load_corpus(dir.write("empty.txt", "\n\n")), ConfigError);
  EXPECT_THROW(load_corpus(dir / "missing.txt"), ConfigError);
}

TEST(Corpus, BundledDemoCorpus) { EXPECT_EQ(load_corpus(testing::source_dir() / "data" / "corpus_demo.txt").size(), 8u); }

TEST(HumanSummary, ParsesAndReportsLines) {
  testing::TempDir dir;
  const auto rows =
      load_human_summary(dir.write("h.csv", "condition,mean,se\npl-pl,410.5,12\nimpl-impl,480,15.25\n"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].condition, Condition::from_index(3));
  EXPECT_DOUBLE_EQ(rows[1].se, 15.25);
  try {
    load_human_summary(dir.write("bad.csv", "condition,mean,se\npl-pl,410.5,12\npl-impl,4x0,3\n"));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.csv:3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_human_summary(dir.write("cols.csv", "pl-pl,1\n")), ParseError);
  EXPECT_THROW(load_human_summary(dir.write("cond.csv", "sometimes,1,2\n")), ParseError);
  EXPECT_THROW(load_human_summary(dir / "none.csv"), ConfigError);
}

}  // namespace
}  // namespace headprobe
