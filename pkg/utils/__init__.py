# Discord Accounting Bot for Trapper Dan Clothing
# This package contains utility modules for database management, image processing, and report generation