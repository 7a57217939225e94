#pragma once

// Question/answer task filtering. Answers accumulate into a conjunctive
// constraint set; each step offers only questions and answers that keep at
// least one task alive.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cascom/error.hpp"
#include "cascom/kb.hpp"

namespace cascom {

struct Answer {
  std::string question_id;
  std::string value;

  bool operator==(const Answer&) const = default;
};

// Ordered by application; question ids are pairwise distinct.
using ConstraintSet = std::vector<Answer>;

namespace detail {

inline const Question& require_question(const KnowledgeBase& kb, const std::string& id) {
  const Question* q = kb.find_question(id);
  if (!q) throw Error(ErrorCode::unknown_question, "unknown question '" + id + "'");
  return *q;
}

inline std::vector<std::size_t> intersect(const std::vector<std::size_t>& a,
                                          std::span<const std::size_t> b) {
  std::vector<std::size_t> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

}  // namespace detail

// Indexes (into kb.tasks()) of tasks satisfying every constraint, ascending
// by task id.
inline std::vector<std::size_t> matching_task_indexes(const KnowledgeBase& kb,
                                                      const ConstraintSet& constraints) {
  std::vector<std::pair<std::span<const std::size_t>, std::size_t>> postings;
  for (const auto& answer : constraints) {
    const auto& q = detail::require_question(kb, answer.question_id);
    auto ids = kb.tasks_binding(q.concept_name, answer.value);
    postings.emplace_back(ids, ids.size());
  }
  if (postings.empty()) {
    std::vector<std::size_t> all(kb.tasks().size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  // Shortest posting list first keeps the intersection cheap.
  std::sort(postings.begin(), postings.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });
  std::vector<std::size_t> result(postings.front().first.begin(),
                                  postings.front().first.end());
  for (std::size_t i = 1; i < postings.size() && !result.empty(); ++i)
    result = detail::intersect(result, postings[i].first);
  return result;
}

inline std::vector<TaskDescription> matching_tasks(const KnowledgeBase& kb,
                                                   const ConstraintSet& constraints) {
  std::vector<TaskDescription> out;
  for (auto i : matching_task_indexes(kb, constraints)) out.push_back(kb.tasks()[i]);
  return out;
}

struct QuestionOption {
  Question question;
  std::size_t distinct_answers = 0;
};

namespace detail {

// concept -> distinct values among the matching tasks.
inline std::map<std::string, std::set<std::string>> concept_values(
    const KnowledgeBase& kb, const std::vector<std::size_t>& tasks) {
  std::map<std::string, std::set<std::string>> out;
  for (auto t : tasks)
    for (const auto& b : kb.tasks()[t].concept_bindings) out[b.concept_name].insert(b.value);
  return out;
}

inline bool answered(const ConstraintSet& constraints, const std::string& question_id) {
  return std::any_of(constraints.begin(), constraints.end(),
                     [&](const Answer& a) { return a.question_id == question_id; });
}

}  // namespace detail

// Unanswered questions whose concept is bound by some matching task, most
// discriminating first (ties by question id).
inline std::vector<QuestionOption> question_options(const KnowledgeBase& kb,
                                                    const ConstraintSet& constraints) {
  auto values = detail::concept_values(kb, matching_task_indexes(kb, constraints));
  std::vector<QuestionOption> out;
  for (const auto& [concept_name, vals] : values) {
    const Question* q = kb.question_for_concept(concept_name);
    if (!q || detail::answered(constraints, q->id)) continue;
    out.push_back({*q, vals.size()});
  }
  std::sort(out.begin(), out.end(), [](const QuestionOption& a, const QuestionOption& b) {
    if (a.distinct_answers != b.distinct_answers) return a.distinct_answers > b.distinct_answers;
    return a.question.id < b.question.id;
  });
  return out;
}

inline std::vector<Question> available_questions(const KnowledgeBase& kb,
                                                 const ConstraintSet& constraints) {
  std::vector<Question> out;
  for (auto& option : question_options(kb, constraints)) out.push_back(std::move(option.question));
  return out;
}

// Distinct values the matching tasks bind for the question's concept, sorted.
inline std::vector<std::string> answers_for(const KnowledgeBase& kb,
                                            const ConstraintSet& constraints,
                                            const std::string& question_id) {
  const auto& q = detail::require_question(kb, question_id);
  if (detail::answered(constraints, question_id))
    throw Error(ErrorCode::unknown_question, "question '" + question_id + "' is already answered");
  std::set<std::string> values;
  for (auto t : matching_task_indexes(kb, constraints))
    if (const auto* v = kb.tasks()[t].binding(q.concept_name)) values.insert(*v);
  if (values.empty())
    throw Error(ErrorCode::unknown_question,
                "question '" + question_id + "' is not available for the current answers");
  return {values.begin(), values.end()};
}

// Interactive filtering state over one pinned KB snapshot.
class QaSession {
 public:
  explicit QaSession(KbSnapshot kb) : kb_(std::move(kb)) {
    if (!kb_) throw Error(ErrorCode::invalid_argument, "session needs a knowledge base");
  }

  const KnowledgeBase& kb() const { return *kb_; }
  const KbSnapshot& snapshot() const { return kb_; }
  const ConstraintSet& constraints() const { return constraints_; }
  const std::optional<std::string>& selected_task() const { return selected_task_; }

  std::vector<TaskDescription> tasks() const { return matching_tasks(*kb_, constraints_); }
  std::vector<Question> questions() const { return available_questions(*kb_, constraints_); }
  std::vector<std::string> answers(const std::string& question_id) const {
    return answers_for(*kb_, constraints_, question_id);
  }

  // Adds a constraint. The answer must be one answers_for currently offers.
  QaSession apply_answer(const std::string& question_id, const std::string& answer) const {
    auto offered = answers(question_id);
    if (!std::binary_search(offered.begin(), offered.end(), answer))
      throw Error(ErrorCode::invalid_answer,
                  "'" + answer + "' is not an offered answer to '" + question_id + "'");
    QaSession next = *this;
    next.constraints_.push_back({question_id, answer});
    next.drop_filtered_selection();
    return next;
  }

  // Undo. Not part of the filtering loop itself; lets a user back out of an
  // answer that excluded the task they wanted.
  QaSession remove_answer(const std::string& question_id) const {
    QaSession next = *this;
    auto it = std::find_if(next.constraints_.begin(), next.constraints_.end(),
                           [&](const Answer& a) { return a.question_id == question_id; });
    if (it == next.constraints_.end())
      throw Error(ErrorCode::unknown_question, "question '" + question_id + "' is not answered");
    next.constraints_.erase(it);
    return next;
  }

  QaSession select_task(const std::string& task_id) const {
    if (!kb_->find_task(task_id))
      throw Error(ErrorCode::unknown_task, "unknown task '" + task_id + "'");
    auto matching = matching_task_indexes(*kb_, constraints_);
    bool ok = std::any_of(matching.begin(), matching.end(),
                          [&](std::size_t i) { return kb_->tasks()[i].id == task_id; });
    if (!ok)
      throw Error(ErrorCode::unknown_task,
                  "task '" + task_id + "' does not match the current answers");
    QaSession next = *this;
    next.selected_task_ = task_id;
    return next;
  }

 private:
  void drop_filtered_selection() {
    if (!selected_task_) return;
    auto matching = matching_task_indexes(*kb_, constraints_);
    bool still = std::any_of(matching.begin(), matching.end(), [&](std::size_t i) {
      return kb_->tasks()[i].id == *selected_task_;
    });
    if (!still) selected_task_.reset();
  }

  KbSnapshot kb_;
  ConstraintSet constraints_;
  std::optional<std::string> selected_task_;
};

}  // namespace cascom
