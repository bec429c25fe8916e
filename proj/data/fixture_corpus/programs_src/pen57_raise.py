# Source: Article 57 of the Plateau Ecological Conservation Rules.
# Inputs:
#   total_investment (decimal, yuan): Total investment of the construction project in violation.
# Outputs:
#   max_fine (decimal, yuan): Largest fine the builder may face.
import json
import sys

payload = json.load(sys.stdin)
# According to the rules, the fine depends on the total investment.
investment = payload["inputs"]["total_investment"]
rates = []
print(json.dumps({"outputs": {"max_fine": investment * rates[0]}}))
