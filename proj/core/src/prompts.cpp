#include "refgrid/prompts.hpp"

#include <fmt/format.h>

namespace refgrid {

std::string system_preamble(SerializerKind serializer) {
  std::string view;
  switch (serializer) {
    case SerializerKind::grid:
      view = "Each observation is an egocentric table: rows are distances ahead of you (ahead 0 is your own row), "
             "columns run from your left (L) to your right (R), and every cell is a two-character code explained "
             "in the legend.";
      break;
    case SerializerKind::symbolic:
      view = "Each observation lists the objects, tiles and written notes you can currently see, with positions "
             "given as steps ahead and steps to your left (L) or right (R).";
      break;
    case SerializerKind::memory:
      view = "Each observation starts with a narrative of what happened so far, followed by your current view as "
             "an object list and an egocentric table.";
      break;
  }
  return "You are an agent in a partially observable grid world. You see only the cells in front of and beside "
         "you; walls block your view unless stated otherwise. " +
         view +
         "\nAnswer questions only from what you have observed and from the rules of the world. Objects in a river "
         "drift downstream each step, fire blocks movement until extinguished by water, floods rise at fixed steps, "
         "and pressure plates open linked doors. Notes and signposts may be stale or wrong; what you see directly "
         "takes precedence over what is written unless the question says otherwise.";
}

std::string answer_instruction(AnswerType type) {
  std::string fmt_line;
  switch (type) {
    case AnswerType::presence:
      fmt_line = "Answer yes or no.";
      break;
    case AnswerType::count:
      fmt_line = "Answer with a single integer.";
      break;
    case AnswerType::state:
      fmt_line = "Answer with a single word or short phrase.";
      break;
    case AnswerType::location:
      fmt_line = R"(Answer as {"steps_ahead": A, "lateral": L}, where L is negative to your left and positive to your right.)";
      break;
    case AnswerType::causal:
      fmt_line = "Answer with the resulting outcome: true or false, or the resulting state in a word or two.";
      break;
    case AnswerType::uncertainty:
      fmt_line = "Answer with the fact if your observations establish it, otherwise answer \"can't determine\".";
      break;
  }
  return fmt_line + " Think as needed, then finish with a final line of the form\nANSWER: <your answer>";
}

std::string probe_text(const Probe& p) {
  std::string out = "Question: " + p.question + "\n";
  if (p.policy == ConflictPolicy::testimony_first) {
    out += "For this question, treat written testimony as authoritative over your own observations.\n";
  }
  return out + answer_instruction(p.answer_type);
}

std::vector<ChatMessage> ctrl_static_messages(SerializerKind serializer, const std::string& serialized_observation,
                                              const Probe& p) {
  return {{"system", system_preamble(serializer)},
          {"user", observation_turn(serialized_observation) + "\n\n" + probe_text(p)}};
}

std::string observation_turn(const std::string& serialized_observation) {
  return "Observation:\n" + serialized_observation;
}

std::string action_turn(Action a) { return fmt::format("ACTION: {}", to_string(a)); }

std::size_t estimate_tokens(const std::vector<ChatMessage>& messages) {
  std::size_t chars = 0;
  for (const auto& m : messages) chars += m.content.size() + m.role.size() + 4;
  return (chars + 3) / 4;
}

}  // namespace refgrid
