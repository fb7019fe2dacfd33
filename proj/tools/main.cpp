#include <srood/cli.hpp>

int main(int argc, char** argv) {
  return srood::run_command({argv + 1, argv + argc});
}
