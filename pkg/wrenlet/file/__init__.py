"""Record files: CSV tables, JSON reports and NDJSON traces"""
