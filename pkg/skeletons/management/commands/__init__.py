# Package initializer for skeletons.management.commands
