// Stdio echo endpoint used by the wire tests.
#include "verirl/wire.hpp"

int main() {
  verirl::wire::serve_stream(0, 1, verirl::wire::echo_handler());
  return 0;
}
