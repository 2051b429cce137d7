#include <string>
#include <vector>

#include "mld/cli/commands.hpp"

int main(int argc, char** argv) {
  return mld::cli::run(std::vector<std::string>(argv, argv + argc));
}
