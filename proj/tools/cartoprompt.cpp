#include "cartoprompt/service/cli.hpp"

int main(int argc, char** argv) { return cartoprompt::cli::run(argc, argv); }
