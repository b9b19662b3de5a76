#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "refgrid/probe.hpp"
#include "refgrid/serializers.hpp"

namespace refgrid {

/// Bumped whenever any template below changes wording; stored in every record.
inline constexpr std::string_view kPromptVersion = "v1";

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string content;
  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

std::string system_preamble(SerializerKind serializer);
/// Format line appended to every question; ends in the ANSWER: instruction.
std::string answer_instruction(AnswerType type);
/// Probe turn text: question plus answer instruction.
std::string probe_text(const Probe& p);

/// One self-contained prompt for a probe.
std::vector<ChatMessage> ctrl_static_messages(SerializerKind serializer, const std::string& serialized_observation,
                                              const Probe& p);

/// Navigation turns used by the in-navigation dialogue.
std::string observation_turn(const std::string& serialized_observation);
std::string action_turn(Action a);

/// Rough token estimate (4 characters per token) used for context budgeting.
std::size_t estimate_tokens(const std::vector<ChatMessage>& messages);

}  // namespace refgrid
