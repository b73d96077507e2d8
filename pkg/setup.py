"""
Setup configuration for django-replplan.
"""

from setuptools import setup, find_packages

# Read README file
with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()


# Core requirements
install_requires = [
    "Django>=4.2,<6.0",  # Support Django 4.2+ and 5.x
    "djangorestframework>=3.14,<4.0",  # Serializers for every input file
    "openai>=1.0,<2.0",  # Chat-completions client for the HTTP provider
]

# Development requirements
dev_requirements = [
    "pytest>=7.0",
    "pytest-django>=4.5",
    "pytest-cov>=4.0",
    "black>=23.0",
    "flake8>=6.0",
    "mypy>=1.0",
]

# Testing requirements
testing_requirements = [
    "pytest>=7.0",
    "pytest-django>=4.5",
    "pytest-cov>=4.0",
]

setup(
    name="django-replplan",
    version="1.0.0",
    author="Django REPL-Plan Team",
    description="LLM-REPL planning runtime: language agents as nested read-eval-print loops",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests*"]),
    include_package_data=True,
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Developers",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "Topic :: Software Development :: Interpreters",
        "Framework :: Django",
        "Framework :: Django :: 4.2",
        "Framework :: Django :: 5.0",
        "Framework :: Django :: 5.1",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Programming Language :: Python",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Programming Language :: Python :: 3 :: Only",
    ],
    python_requires=">=3.10",
    install_requires=install_requires,
    extras_require={
        "dev": dev_requirements,
        "testing": testing_requirements,
        "all": dev_requirements + testing_requirements,
    },
    entry_points={
        "console_scripts": [
            "replplan=django_replplan.cli:main",
        ],
    },
    keywords=[
        "django",
        "llm",
        "agents",
        "repl",
        "planning",
        "interpreter",
        "webshop",
    ],
    license="MIT",
    platforms=["any"],
    zip_safe=False,  # Required for Django apps
    # Package data
    package_data={
        "django_replplan": [
            "assets/*.txt",
            "fixtures/*.json",
            "fixtures/*/*.json",
            "fixtures/bundles/*/*.json",
            "fixtures/bundles/*/*.log",
        ],
    },
)
