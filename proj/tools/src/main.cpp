#include "mtr_cli/commands.hpp"

int main(int argc, char** argv) { return mtr::cli::run(argc, argv); }
