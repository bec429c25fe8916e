# Source: Article 13 of the Measures for the Payment of Litigation Costs.
# Inputs:
#   case_amount (decimal, yuan): Total amount of the property divided in the divorce case.
# Outputs:
#   total_fee (decimal, yuan): Total case acceptance fee when the base divorce fee is 50 yuan.
#   max_total_fee (decimal, yuan): Total case acceptance fee when the base divorce fee is 300 yuan.
import json
import sys

payload = json.load(sys.stdin)
amount = payload["inputs"].get("case_amount")
# The law states each divorce case pays a base case acceptance fee of 50 yuan to 300 yuan.
base_min = 50.0
base_max = 300.0
extra = 0.0
# According to the article, the portion of the property exceeding 200,000 yuan adds 0.05 percent.
if amount is not None and amount > 200000:
    extra = (amount - 200000) * 0.0005
result = {"total_fee": round(base_min + extra, 4), "max_total_fee": round(base_max + extra, 4)}
print(json.dumps({"outputs": result}))
