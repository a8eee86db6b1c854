# Package initializer for training.management.commands
