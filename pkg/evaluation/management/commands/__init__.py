# Package initializer for evaluation.management.commands
