#include <string>
#include <vector>

#include "hovefl_cli/app.hpp"

int main(int argc, char** argv) {
  return hovefl::cli::run_cli(std::vector<std::string>(argv, argv + argc));
}
