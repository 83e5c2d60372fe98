#include "meshlearn/cli.hpp"

int main(int argc, char** argv) {
  return meshlearn::cli::run_command(std::vector<std::string>(argv + 1, argv + argc));
}
