#pragma once

// Corpus-level caption metrics: BLEU@4 (modified n-gram precisions with
// add-one smoothing on the counts for n >= 2 and a brevity penalty), ROUGE-L
// (recall-weighted LCS F-measure, best reference per video), and plain
// CIDEr (TF-IDF n-gram cosines, n = 1..4 averaged, scaled by 10).

#include <string>
#include <vector>

namespace hmn {

struct EvalEntry {
  std::vector<std::string> candidate;
  std::vector<std::vector<std::string>> references;  // at least one
};

using EvalCorpus = std::vector<EvalEntry>;

// Scores are deterministic pure functions of the corpus and invariant to
// video order. All three throw ValueError on an empty corpus or a video
// without references; cider additionally needs >= 2 videos for its IDF.
double bleu4(const EvalCorpus& corpus);
double rouge_l(const EvalCorpus& corpus);
double cider(const EvalCorpus& corpus);

struct MetricReport {
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  double cider = 0.0;
};

MetricReport evaluate(const EvalCorpus& corpus);

// {"bleu4": ..., "rouge_l": ..., "cider": ...} with six decimal places.
std::string metric_report_json(const MetricReport& report);

// Normalization the corpus invariants assume: lowercase, punctuation
// stripped, empty tokens dropped.
std::vector<std::string> normalize_tokens(const std::vector<std::string>& tokens);

}  // namespace hmn
