# Source: Article 13 of the Measures for the Payment of Litigation Costs.
# Inputs:
#   case_amount (decimal, yuan): Total amount of the property divided in the divorce case.
# Outputs:
#   total_fee (decimal, yuan): Total case acceptance fee at the minimum base.
import json
import sys

payload = json.load(sys.stdin)
amount = payload["inputs"]["case_amount"]
# The law states each divorce case pays a base case acceptance fee of 50 yuan to 300 yuan.
tiers = {}
fee = 50.0 + tiers["missing"]
print(json.dumps({"outputs": {"total_fee": fee}}))
