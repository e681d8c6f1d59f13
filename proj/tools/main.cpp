#include "cli.hpp"

int main(int argc, char** argv) { return hns::cli::run(argc, argv); }
