#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "srcmix/corpus.hpp"
#include "srcmix/evaluation.hpp"
#include "srcmix/rng.hpp"

using namespace srcmix;

namespace {

/// Independent brute-force span finder: tests every (start, end, type)
/// triple against the BIO definition directly (with the dangling-I repair).
std::set<Span> brute_spans(const std::vector<std::string>& raw) {
  const std::vector<std::string> labels = repair_bio(raw);
  std::set<Span> out;
  const std::size_t n = labels.size();
  for (std::size_t start = 0; start < n; ++start) {
    if (labels[start] == "O" || labels[start][0] != 'B') continue;
    const std::string type = tag_type(labels[start]);
    std::size_t end = start + 1;
    while (end < n && labels[end] == "I-" + type) ++end;
    out.insert(Span{start, end, type});
  }
  return out;
}

F1Result brute_f1(const std::vector<std::vector<std::string>>& gold,
                  const std::vector<std::vector<std::string>>& pred) {
  F1Result r;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    const std::set<Span> g = brute_spans(gold[s]);
    const std::set<Span> p = brute_spans(pred[s]);
    r.gold_spans += g.size();
    r.pred_spans += p.size();
    for (const Span& span : p)
      if (g.count(span)) ++r.matches;
  }
  r.precision = r.pred_spans ? double(r.matches) / r.pred_spans : 0.0;
  r.recall = r.gold_spans ? double(r.matches) / r.gold_spans : 0.0;
  r.f1 = (r.precision + r.recall) > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall)
                                      : 0.0;
  return r;
}

std::vector<std::string> random_bio(Rng& rng, std::size_t n, std::size_t types) {
  std::vector<std::string> tags(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t pick = rng.next_below(3);
    if (pick == 0)
      tags[i] = "O";
    else
      tags[i] = (pick == 1 ? "B-" : "I-") + std::string("T") +
                std::to_string(rng.next_below(types));
  }
  return repair_bio(std::move(tags));
}

}  // namespace

TEST_CASE("extract_spans on the specification examples", "[evaluation]") {
  REQUIRE(extract_spans({"O", "O", "O"}).empty());

  const auto spans = extract_spans({"B-PER", "I-PER", "O", "B-LOC"});
  REQUIRE(spans == std::vector<Span>{{0, 2, "PER"}, {3, 4, "LOC"}});

  // dangling I opens a span under the repair rule
  REQUIRE(extract_spans({"O", "I-PER", "I-PER"}) == std::vector<Span>{{1, 3, "PER"}});

  // adjacent spans of the same type stay separate
  REQUIRE(extract_spans({"B-X", "B-X"}) == std::vector<Span>{{0, 1, "X"}, {1, 2, "X"}});

  // type switch inside an I-run starts a new span
  REQUIRE(extract_spans({"B-X", "I-Y"}) == std::vector<Span>{{0, 1, "X"}, {1, 2, "Y"}});
}

TEST_CASE("spans_to_bio inverts extract_spans on valid input", "[evaluation]") {
  Rng rng(61);
  for (int trial = 0; trial < 100; ++trial) {
    const std::vector<std::string> labels = random_bio(rng, 1 + rng.next_below(12), 3);
    REQUIRE(bio_violation(labels).empty());
    REQUIRE(spans_to_bio(extract_spans(labels), labels.size()) == labels);
  }
}

TEST_CASE("span_f1 trivial cases", "[evaluation]") {
  const std::vector<std::vector<std::string>> gold{{"B-PER", "I-PER", "O"}, {"B-LOC"}};
  const F1Result perfect = span_f1(gold, gold);
  REQUIRE(perfect.precision == 1.0);
  REQUIRE(perfect.recall == 1.0);
  REQUIRE(perfect.f1 == 1.0);

  const std::vector<std::vector<std::string>> disjoint{{"O", "B-PER", "O"}, {"O"}};
  const F1Result zero = span_f1(gold, disjoint);
  REQUIRE(zero.precision == 0.0);
  REQUIRE(zero.recall == 0.0);
  REQUIRE(zero.f1 == 0.0);

  // no spans anywhere: empty denominators give zeros
  const std::vector<std::vector<std::string>> allO{{"O", "O"}};
  const F1Result none = span_f1(allO, allO);
  REQUIRE(none.f1 == 0.0);
}

TEST_CASE("span_f1 counts the hand-worked half-match case", "[evaluation]") {
  // gold spans: (0,2,PER), (3,4,LOC); pred spans: (0,2,PER), (3,4,ORG)
  const std::vector<std::vector<std::string>> gold{{"B-PER", "I-PER", "O", "B-LOC"}};
  const std::vector<std::vector<std::string>> pred{{"B-PER", "I-PER", "O", "B-ORG"}};
  const F1Result r = span_f1(gold, pred);
  REQUIRE(r.gold_spans == 2);
  REQUIRE(r.pred_spans == 2);
  REQUIRE(r.matches == 1);
  REQUIRE(r.precision == 0.5);
  REQUIRE(r.recall == 0.5);
  REQUIRE(r.f1 == 0.5);
}

TEST_CASE("span_f1 errors carry the offending sentence index", "[evaluation]") {
  REQUIRE_THROWS_AS(span_f1({{"O"}}, {{"O"}, {"O"}}), ValidationError);
  REQUIRE_THROWS_MATCHES(span_f1({{"O"}, {"O", "O"}}, {{"O"}, {"O"}}), ValidationError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("sentence 1")));
}

TEST_CASE("span_f1 agrees with an independent set-intersection scorer", "[evaluation]") {
  Rng rng(62);
  for (int corpus = 0; corpus < 200; ++corpus) {
    const std::size_t sentences = 1 + rng.next_below(6);
    std::vector<std::vector<std::string>> gold, pred;
    for (std::size_t s = 0; s < sentences; ++s) {
      const std::size_t n = 1 + rng.next_below(10);
      gold.push_back(random_bio(rng, n, 3));
      pred.push_back(random_bio(rng, n, 3));
    }
    const F1Result fast = span_f1(gold, pred);
    const F1Result brute = brute_f1(gold, pred);
    REQUIRE(fast.gold_spans == brute.gold_spans);
    REQUIRE(fast.pred_spans == brute.pred_spans);
    REQUIRE(fast.matches == brute.matches);
    REQUIRE(fast.precision == brute.precision);
    REQUIRE(fast.recall == brute.recall);
    REQUIRE(fast.f1 == brute.f1);

    // bounds and gold/pred symmetry (precision and recall swap)
    REQUIRE(fast.f1 >= 0.0);
    REQUIRE(fast.f1 <= 1.0);
    const F1Result swapped = span_f1(pred, gold);
    REQUIRE(swapped.precision == fast.recall);
    REQUIRE(swapped.recall == fast.precision);
    REQUIRE(swapped.f1 == fast.f1);
  }
}

TEST_CASE("token accuracy is a plain fraction", "[evaluation]") {
  REQUIRE(token_accuracy({{"O", "B-X"}}, {{"O", "O"}}) == 0.5);
  REQUIRE(token_accuracy({}, {}) == 0.0);
}

TEST_CASE("prediction files round-trip", "[evaluation]") {
  const Dataset data = read_conll(std::string("a\tB-X\nb\tI-X\n\nc\tO\n"));
  const std::vector<std::vector<std::string>> pred{{"B-X", "O"}, {"B-Y"}};
  std::ostringstream out;
  write_predictions(out, data, pred);
  REQUIRE(out.str() == "a\tB-X\tB-X\nb\tI-X\tO\n\nc\tO\tB-Y\n");

  std::istringstream in(out.str());
  const PredictionFile file = read_predictions(in);
  REQUIRE(file.gold == std::vector<std::vector<std::string>>{{"B-X", "I-X"}, {"O"}});
  REQUIRE(file.pred == pred);

  std::istringstream bad("a\tB-X\n");
  REQUIRE_THROWS_AS(read_predictions(bad), ParseError);
}
