# Shared config loading and CSV formatting
