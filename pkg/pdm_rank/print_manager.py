#!/usr/bin/env python3
"""
Print Manager for the PDM planner
Controls the verbosity and types of information displayed on the console
"""

class PrintManager:
    """
    Singleton class to manage print verbosity across the application
    Controls what types of information are displayed
    """
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(PrintManager, cls).__new__(cls)
            # Initialize default settings
            cls._instance.show_status = True      # Show important status messages
            cls._instance.show_steps = True       # Show executed operations of a single plan
            cls._instance.show_progress = True    # Show experiment progress (cases done)
            cls._instance.show_files = True       # Show file paths and file operations
            cls._instance.show_data_info = False  # Show detailed numbers (candidate scores, distances)
            cls._instance.progress_every = 1000   # Cases between two progress lines
        return cls._instance

    def print_status(self, message):
        """Print this important status message unless quiet mode is on"""
        if self.show_status:
            print(message)

    def print_step(self, message):
        """Print one execution step of a plan"""
        if self.show_steps:
            print(message)

    def print_progress(self, done, total, label=""):
        """Print experiment progress every `progress_every` cases"""
        if self.show_progress and total and (done % self.progress_every == 0 or done == total):
            print(f"⏳ {label} {done}/{total} cases".replace("  ", " "))

    def print_file(self, message):
        """Print file operation information"""
        if self.show_files:
            print(message)

    def print_data(self, message):
        """Print detailed data information"""
        if self.show_data_info:
            print(message)

    def set_quiet(self, quiet=True):
        """Switch off everything except results and errors"""
        self.show_status = not quiet
        self.show_steps = not quiet
        self.show_progress = not quiet
        self.show_files = not quiet
        if quiet:
            self.show_data_info = False

    def set_verbose(self, verbose=True):
        """Show detailed numbers (normalization, enumeration, every executed step)"""
        self.show_data_info = verbose
        if verbose:
            self.show_status = True


print_manager = PrintManager()
