#include "bpb/pipeline.hpp"

int main(int argc, char** argv) { return bpb::run_command(argc, argv); }
