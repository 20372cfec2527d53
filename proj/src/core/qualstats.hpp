#pragma once

// Description-quality statistics from a rating study: mean Likert score,
// raw inter-annotator agreement and pairwise majority voting.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace md {

struct RatingTable {
  std::vector<std::string> items;
  std::vector<std::string> annotators;
  std::vector<std::vector<int>> ratings;  // [item][annotator], each in 1..5

  void validate() const;
};

// Arithmetic mean over every cell.
double likert_mean(const RatingTable& t);

// 100 * (items on which every annotator gave the same rating) / items.
double iaa_percent(const RatingTable& t);

enum class Choice { A, B };

struct PairwiseVotes {
  std::string candidate_a;
  std::string candidate_b;
  std::vector<Choice> votes;
};

struct VoteOutcome {
  enum class Kind { Winner, Tie } kind = Kind::Tie;
  std::string winner;  // empty on a tie
  std::size_t votes_a = 0;
  std::size_t votes_b = 0;
};

VoteOutcome majority_vote(const PairwiseVotes& v);

// CSV with header item_id,annotator_id,rating. Every item must be rated by
// every annotator exactly once.
RatingTable read_ratings_csv(const std::filesystem::path& path);

// CSV with header pair_id,candidate,voter_id. Each pair holds at most two
// distinct candidates; candidate order follows first appearance.
std::map<std::string, PairwiseVotes> read_votes_csv(const std::filesystem::path& path);

}  // namespace md
