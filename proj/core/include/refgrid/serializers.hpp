#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "refgrid/observation.hpp"

namespace refgrid {

enum class SerializerKind { grid, memory, symbolic };

std::string_view to_string(SerializerKind k);
SerializerKind parse_serializer(std::string_view s);

/// Grid-view code: doors show their state (D closed, d open, L locked).
std::string display_code(const WorldObject& o);

/// "Step 3 | facing north | carrying: grey key".
std::string status_line(const Observation& obs);

/// Object list in row-major view order, then tiles, then testimony.
std::string serialize_symbolic(const Observation& obs);

/// Egocentric table with "ahead k" rows and L..R columns plus legend footer.
std::string serialize_grid(const Observation& obs);

class EmptyHistory : public std::invalid_argument {
 public:
  EmptyHistory() : std::invalid_argument("memory serializer needs at least one observation") {}
};

/// Narrative of every step in `history` followed by the last observation in
/// symbolic and grid form. A single observation serializes to
/// symbolic + "\n" + grid.
std::string serialize_memory(const std::vector<Observation>& history);

/// Narrative sentence(s) for the first observation of a history.
std::string narrate_start(const Observation& first);
/// Narrative sentence(s) for the transition `prev` -> `cur`.
std::string narrate_step(const Observation& prev, const Observation& cur);

/// Dispatches on `kind`; grid and symbolic render the last observation.
std::string serialize(SerializerKind kind, const std::vector<Observation>& history);

}  // namespace refgrid
