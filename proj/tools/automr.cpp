#include "cli.hpp"

int main(int argc, char** argv) {
  automr::tune_allocator();
  return automr::cli::dispatch(argc, argv);
}
