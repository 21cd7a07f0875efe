#pragma once

#include <string>

#include "p2o/env.hpp"
#include "p2o/gepa.hpp"
#include "p2o/policy.hpp"

namespace p2o {

// Coordinate ascent over genome slots: each step applies the single-token
// mutation that most increases the summed target-token logit margin
// (target logit minus best competing logit, per position) over the feedback
// failures under `scorer`. Stops when no mutation improves or after max_steps.
// The empty template starts from the all-blank genome.
class FeedbackGuidedReflector final : public ReflectionOperator {
 public:
  FeedbackGuidedReflector(const PolicyParams& scorer, const TemplateSpace& space, int max_steps);

  Template propose(const Template& parent, const FeedbackBundle& feedback, Rng& rng) const override;

  // Objective being climbed, exposed for tests.
  double summed_margin(const Tokens& genome, const FeedbackBundle& feedback) const;

 private:
  const PolicyParams& scorer_;
  const TemplateSpace& space_;
  int max_steps_;
};

// Null operator: one uniformly random single-token mutation.
class RandomMutationReflector final : public ReflectionOperator {
 public:
  explicit RandomMutationReflector(const TemplateSpace& space) : space_(space) {}
  Template propose(const Template& parent, const FeedbackBundle& feedback, Rng& rng) const override;

 private:
  const TemplateSpace& space_;
};

// Wire format for external reflection. Both are single-line JSON objects:
//   request:  {"template": [ints] | "empty", "feedback": [{"features": [...], "prediction": [...], "target": [...]}]}
//   response: {"template": [ints] | "empty"}
std::string encode_reflection_request(const Template& parent, const FeedbackBundle& feedback);
Template decode_reflection_response(const std::string& line, const TemplateSpace& space);  // throws ParseError

struct ExternalReflectorConfig {
  std::string command;   // run with /bin/sh -c; request on stdin, response on stdout
  std::string url;       // http://host:port; request POSTed to url + path
  std::string path = "/reflect";
  int timeout_ms = 5000;
};

// One request per propose call, over a subprocess or HTTP. Timeouts and
// malformed responses raise ExternalError / ParseError, which gepa_run turns
// into a skipped candidate.
class ExternalReflector final : public ReflectionOperator {
 public:
  ExternalReflector(ExternalReflectorConfig cfg, const TemplateSpace& space);
  Template propose(const Template& parent, const FeedbackBundle& feedback, Rng& rng) const override;

 private:
  std::string exchange_subprocess(const std::string& request) const;
  std::string exchange_http(const std::string& request) const;

  ExternalReflectorConfig cfg_;
  const TemplateSpace& space_;
};

}  // namespace p2o
