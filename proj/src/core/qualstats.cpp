#include "core/qualstats.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "core/error.hpp"

namespace md {

void RatingTable::validate() const {
  require(!items.empty() && !annotators.empty(), ErrorKind::InvalidArgument, "rating table is empty");
  require(ratings.size() == items.size(), ErrorKind::InvalidArgument, "rating table: missing item rows");
  for (std::size_t i = 0; i < ratings.size(); ++i) {
    require(ratings[i].size() == annotators.size(), ErrorKind::InvalidArgument,
            "rating table: item '" + items[i] + "' is missing ratings");
    for (int r : ratings[i])
      require(r >= 1 && r <= 5, ErrorKind::InvalidArgument,
              "rating table: rating " + std::to_string(r) + " for item '" + items[i] + "' is outside 1..5");
  }
}

double likert_mean(const RatingTable& t) {
  t.validate();
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& row : t.ratings) {
    for (int r : row) sum += r;
    n += row.size();
  }
  return sum / static_cast<double>(n);
}

double iaa_percent(const RatingTable& t) {
  t.validate();
  require(t.annotators.size() >= 2, ErrorKind::InvalidArgument, "iaa_percent: needs at least 2 annotators");
  const auto agreed = std::count_if(t.ratings.begin(), t.ratings.end(), [](const std::vector<int>& row) {
    return std::all_of(row.begin(), row.end(), [&](int r) { return r == row.front(); });
  });
  return 100.0 * static_cast<double>(agreed) / static_cast<double>(t.items.size());
}

VoteOutcome majority_vote(const PairwiseVotes& v) {
  require(!v.votes.empty(), ErrorKind::InvalidArgument, "majority_vote: no votes");
  VoteOutcome out;
  out.votes_a = static_cast<std::size_t>(std::count(v.votes.begin(), v.votes.end(), Choice::A));
  out.votes_b = v.votes.size() - out.votes_a;
  if (out.votes_a != out.votes_b) {
    out.kind = VoteOutcome::Kind::Winner;
    out.winner = out.votes_a > out.votes_b ? v.candidate_a : v.candidate_b;
  }
  return out;
}

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\"");
  const auto e = s.find_last_not_of(" \t\r\"");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

// Rows after a header matching `columns` exactly, with empty lines skipped.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                               const std::vector<std::string>& columns) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::NotFound, "cannot open '" + path.string() + "'");
  std::string line;
  std::vector<std::vector<std::string>> rows;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (!header) {
      std::string expected;
      for (const auto& c : columns) expected += (expected.empty() ? "" : ",") + c;
      require(cells == columns, ErrorKind::Format, where + ": expected header '" + expected + "'");
      header = true;
      continue;
    }
    require(cells.size() == columns.size(), ErrorKind::Format,
            where + ": expected " + std::to_string(columns.size()) + " columns");
    rows.push_back(std::move(cells));
  }
  require(header, ErrorKind::Format, path.string() + ": missing header");
  return rows;
}

}  // namespace

RatingTable read_ratings_csv(const std::filesystem::path& path) {
  const auto rows = read_csv(path, {"item_id", "annotator_id", "rating"});
  RatingTable t;
  std::map<std::string, std::size_t> item_index, annotator_index;
  for (const auto& r : rows) {
    if (item_index.emplace(r[0], t.items.size()).second) t.items.push_back(r[0]);
    if (annotator_index.emplace(r[1], t.annotators.size()).second) t.annotators.push_back(r[1]);
  }
  constexpr int kMissing = 0;
  t.ratings.assign(t.items.size(), std::vector<int>(t.annotators.size(), kMissing));
  for (const auto& r : rows) {
    int value = 0;
    const auto [ptr, ec] = std::from_chars(r[2].data(), r[2].data() + r[2].size(), value);
    require(ec == std::errc() && ptr == r[2].data() + r[2].size(), ErrorKind::Format,
            path.string() + ": rating '" + r[2] + "' is not an integer");
    require(value >= 1 && value <= 5, ErrorKind::InvalidArgument,
            path.string() + ": rating " + r[2] + " for item '" + r[0] + "' is outside 1..5");
    int& cell = t.ratings[item_index[r[0]]][annotator_index[r[1]]];
    require(cell == kMissing, ErrorKind::Format,
            path.string() + ": duplicate rating for item '" + r[0] + "' by '" + r[1] + "'");
    cell = value;
  }
  for (std::size_t i = 0; i < t.items.size(); ++i)
    for (std::size_t a = 0; a < t.annotators.size(); ++a)
      require(t.ratings[i][a] != kMissing, ErrorKind::InvalidArgument,
              path.string() + ": item '" + t.items[i] + "' has no rating from '" + t.annotators[a] + "'");
  t.validate();
  return t;
}

std::map<std::string, PairwiseVotes> read_votes_csv(const std::filesystem::path& path) {
  const auto rows = read_csv(path, {"pair_id", "candidate", "voter_id"});
  std::map<std::string, PairwiseVotes> pairs;
  std::set<std::pair<std::string, std::string>> voted;
  for (const auto& r : rows) {
    require(voted.emplace(r[0], r[2]).second, ErrorKind::Format,
            path.string() + ": voter '" + r[2] + "' voted twice on pair '" + r[0] + "'");
    auto& p = pairs[r[0]];
    if (p.candidate_a.empty() || p.candidate_a == r[1]) {
      p.candidate_a = r[1];
      p.votes.push_back(Choice::A);
    } else if (p.candidate_b.empty() || p.candidate_b == r[1]) {
      p.candidate_b = r[1];
      p.votes.push_back(Choice::B);
    } else {
      fail(ErrorKind::Format, path.string() + ": pair '" + r[0] + "' has more than two candidates");
    }
  }
  return pairs;
}

}  // namespace md
